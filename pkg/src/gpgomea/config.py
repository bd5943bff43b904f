"""Flat ``key = value`` configuration files for runs and benchmark matrices.

Syntax, one setting per line::

    # comment
    operators = "T11"              # or a list: ["+", "-", "*", "/"]
    depth = 3                      # or "feasible", "feasible-1"
    gcs = "2+"                     # off | 1 | 1+ | 2 | 2+ | 3 | 3+
    ssi = true
    seeds = 0..19                  # inclusive range, or a list
    checkpoints = [1000, 10000]

Values are quoted strings, bare words, integers, floats, booleans, lists in
square brackets, or inclusive integer ranges ``a..b``. Command-line flags
override file keys.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .records import STANDARD_CHECKPOINTS
from .symbols import ALIASES, BUILTIN_SETS, OPERATORS
from .variation import VariantConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_value", "default_checkpoints",
           "KEYS"]


class ConfigError(ValueError):
    def __init__(self, key: str | None, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


# key -> documentation; this is the full reference accepted by parse_config
KEYS = {
    "operators": 'operator set name (T22, T11, B15, B9, B4) or a list of operator names',
    "constraint": "enforce the arithmetic/Boolean type constraint (bool)",
    "constants": "include an ephemeral random constant terminal (bool)",
    "depth": 'template depth >= 1, or "feasible" / "feasible-<k>" relative to each problem',
    "gcs": "greedy child selection: off, 1, 1+, 2, 2+, 3, 3+",
    "ssi": "semantic subtree inheritance (bool)",
    "configs": 'bench: list of configuration labels such as "base", "gcs2+_ssi", or "all"',
    "problem": 'run: built-in problem name, "a|b" for a gated combination, or "csv:<path>"',
    "problems": 'bench: list of problem selectors; "@depth3" expands a depth class and '
                '"@combined3" all its pairwise gated combinations',
    "budget": "function-evaluation cap per run (int > 0)",
    "checkpoints": "ascending FE thresholds at which the elite is recorded",
    "seeds": "run seeds: list or inclusive range a..b",
    "pop_base": "size of the smallest interleaved population (int > 0)",
    "rows": "rows sampled for built-in problems",
    "train_fraction": "share of rows used for training (0 < f < 1)",
    "data_seed": "seed for sampling and splitting problem data",
    "metric": "ranked metric: test_r2, train_r2, test_mse or train_mse",
    "jobs": "bench: parallel worker processes",
    "out": "output path (run: record JSON; bench: directory)",
}

METRICS = ("test_r2", "train_r2", "test_mse", "train_mse")
DEFAULT_BUDGET = 5_000_000


def default_checkpoints(budget: int) -> list[int]:
    """The standard checkpoint list cut at ``budget``, with ``budget`` itself appended."""
    cps = [c for c in STANDARD_CHECKPOINTS if c <= budget]
    if not cps or cps[-1] != budget:
        cps.append(budget)
    return cps


@dataclass
class RunConfig:
    operators: str | tuple[str, ...] = "T22"
    constraint: bool = True
    constants: bool = True
    depth: int | str = 4
    gcs: str = "off"
    ssi: bool = False
    configs: tuple[str, ...] = ()
    problem: str = "bilinear"
    problems: tuple[str, ...] = ()
    budget: int = DEFAULT_BUDGET
    checkpoints: tuple[int, ...] = ()
    seeds: tuple[int, ...] = tuple(range(20))
    pop_base: int = 64
    rows: int = 10_000
    train_fraction: float = 0.75
    data_seed: int = 0
    metric: str = "test_r2"
    jobs: int = 1
    out: str | None = None
    explicit: set = field(default_factory=set, repr=False, compare=False)

    @property
    def variant(self) -> VariantConfig:
        return VariantConfig.parse(self.gcs, self.ssi)

    @property
    def variants(self) -> list[VariantConfig]:
        from .variation import all_variants

        if not self.configs:
            return [self.variant]
        if tuple(self.configs) == ("all",):
            return all_variants(3 if self.operators_branching() >= 3 else 2)
        return [VariantConfig.from_label(c) for c in self.configs]

    def operators_branching(self) -> int:
        names = BUILTIN_SETS[self.operators] if isinstance(self.operators, str) else self.operators
        return max(OPERATORS[ALIASES.get(n, n)].arity for n in names)


_RANGE = re.compile(r"^(-?\d+)\s*\.\.\s*(-?\d+)$")


def _split_list(body: str) -> list[str]:
    items, cur, quote = [], [], None
    for ch in body:
        if quote:
            cur.append(ch)
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            cur.append(ch)
        elif ch == ",":
            items.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if quote:
        raise ValueError("unterminated string")
    tail = "".join(cur).strip()
    if tail:
        items.append(tail)
    elif items:
        raise ValueError("empty list item")
    return items


def parse_value(text: str):
    """Typed value of a config right-hand side."""
    s = text.strip()
    if not s:
        raise ValueError("missing value")
    if s[0] in "\"'":
        if len(s) < 2 or s[-1] != s[0]:
            raise ValueError(f"unterminated string {s!r}")
        return s[1:-1]
    if s.startswith("["):
        if not s.endswith("]"):
            raise ValueError(f"unterminated list {s!r}")
        return [parse_value(x) for x in _split_list(s[1:-1])]
    m = _RANGE.match(s)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if b < a:
            raise ValueError(f"empty range {s!r}")
        return list(range(a, b + 1))
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            return line[:i]
    return line


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(None, f"cannot read config {path}: {e.strerror}") from e
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(line).strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key = key.strip()
        if not eq or not key:
            raise ConfigError(None, f"{path}:{lineno}: expected key = value")
        if key not in KEYS:
            raise ConfigError(key, f"unknown key ({path}:{lineno})")
        try:
            raw[key] = parse_value(value)
        except ValueError as e:
            raise ConfigError(key, str(e)) from None
    return raw


def _as_int(key, v, minimum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ConfigError(key, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return v


def _as_bool(key, v) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true or false, got {v!r}")
    return v


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _validate(raw: dict) -> RunConfig:
    cfg = RunConfig()
    for key, v in raw.items():
        if key in ("constraint", "constants", "ssi"):
            setattr(cfg, key, _as_bool(key, v))
        elif key == "operators":
            if isinstance(v, str):
                if v not in BUILTIN_SETS:
                    raise ConfigError(key, f"invalid operator set {v!r}; expected one of "
                                           f"{', '.join(BUILTIN_SETS)} or a list")
                cfg.operators = v
            else:
                names = tuple(str(x) for x in _as_list(v))
                bad = [n for n in names if ALIASES.get(n, n) not in OPERATORS]
                if bad or not names:
                    raise ConfigError(key, f"unknown operator(s) {bad}")
                cfg.operators = names
        elif key == "depth":
            if isinstance(v, str):
                if not re.fullmatch(r"feasible(-\d+)?", v):
                    raise ConfigError(key, f"expected an integer or feasible[-k], got {v!r}")
                cfg.depth = v
            else:
                cfg.depth = _as_int(key, v, 1)
        elif key == "gcs":
            v = str(v)
            try:
                VariantConfig.parse(v)
            except ValueError as e:
                raise ConfigError(key, str(e)) from None
            cfg.gcs = v
        elif key == "configs":
            labels = tuple(str(x) for x in _as_list(v))
            if labels != ("all",):
                for lab in labels:
                    try:
                        VariantConfig.from_label(lab)
                    except ValueError as e:
                        raise ConfigError(key, str(e)) from None
            cfg.configs = labels
        elif key == "problem":
            cfg.problem = str(v)
        elif key == "problems":
            cfg.problems = tuple(str(x) for x in _as_list(v))
            if not cfg.problems:
                raise ConfigError(key, "empty problem list")
        elif key == "budget":
            cfg.budget = _as_int(key, v, 1)
        elif key == "checkpoints":
            cfg.checkpoints = tuple(_as_int(key, x, 1) for x in _as_list(v))
        elif key == "seeds":
            cfg.seeds = tuple(_as_int(key, x) for x in _as_list(v))
            if not cfg.seeds:
                raise ConfigError(key, "empty seed list")
        elif key in ("pop_base", "rows", "jobs"):
            setattr(cfg, key, _as_int(key, v, 1))
        elif key == "data_seed":
            cfg.data_seed = _as_int(key, v, 0)
        elif key == "train_fraction":
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1:
                raise ConfigError(key, f"expected a number in (0, 1), got {v!r}")
            cfg.train_fraction = float(v)
        elif key == "metric":
            if v not in METRICS:
                raise ConfigError(key, f"invalid metric {v!r}; expected one of {METRICS}")
            cfg.metric = v
        elif key == "out":
            cfg.out = str(v)
        else:  # pragma: no cover - KEYS and this dispatch are kept in sync
            raise ConfigError(key, "unknown key")
    cfg.explicit = set(raw)
    if not cfg.checkpoints:
        cfg.checkpoints = tuple(default_checkpoints(cfg.budget))
    cps = list(cfg.checkpoints)
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ConfigError("checkpoints", "must be strictly ascending")
    if cps[-1] > cfg.budget:
        raise ConfigError("checkpoints", f"checkpoint {cps[-1]} exceeds budget {cfg.budget}")
    if cfg.rows < 4:
        raise ConfigError("rows", "need at least 4 rows")
    return cfg


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (optional), apply ``overrides`` and validate.

    Override values may be typed or raw strings; strings are parsed like
    file values. ``None`` overrides are ignored.
    """
    raw = read_config_file(path) if path is not None else {}
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        if isinstance(v, str):
            try:
                v = parse_value(v)
            except ValueError as e:
                raise ConfigError(key, str(e)) from None
        raw[key] = v
    return _validate(raw)
