"""Ground-truth regression problems, sampling, splitting and CSV ingestion.

Expressions are nested tuples ``(operator, arg, ...)`` whose leaves are
variable names (``"x1"``...) or float constants. Operator names are the
ones in :mod:`gpgomea.symbols`.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import Dataset
from .symbols import OperatorSet, ValueType, apply_symbol
from .template import Genotype, TreeTemplate

__all__ = [
    "ProblemSpec",
    "BUILTIN_PROBLEMS",
    "get_problem",
    "problems_at_depth",
    "generate",
    "combine_discontinuous",
    "all_combinations",
    "split",
    "load_csv",
    "save_csv",
    "expr_height",
    "eval_expr",
    "encode",
    "IngestionError",
]

DEFAULT_RANGE = (1.0, 5.0)


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    expression: tuple
    n_vars: int = 4
    var_ranges: tuple[tuple[float, float], ...] = ()
    var_types: tuple[ValueType, ...] = ()
    feasible_depth: int = 3
    text: str = ""

    def __post_init__(self):
        if not self.var_ranges:
            object.__setattr__(self, "var_ranges", (DEFAULT_RANGE,) * self.n_vars)
        if not self.var_types:
            object.__setattr__(self, "var_types", (ValueType.REAL,) * self.n_vars)
        if len(self.var_ranges) != self.n_vars or len(self.var_types) != self.n_vars:
            raise ValueError(f"{self.name}: one range and one type per variable required")

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.n_vars))


def _p(name, text, expr, depth):
    return ProblemSpec(name, expr, feasible_depth=depth, text=text)


# Physics-style four-variable expressions. Each is hosted exactly by a binary
# (B15) template of its depth and by no shallower one.
_LIBRARY = [
    # depth 3
    _p("d3_prod3_plus", "x1*x2*x3 + x4", ("+", ("*", ("*", "x1", "x2"), "x3"), "x4"), 3),
    _p("d3_sum3_over", "(x1+x2+x3)/x4", ("/", ("+", ("+", "x1", "x2"), "x3"), "x4"), 3),
    _p("d3_sum3_times", "(x1+x2+x3)*x4", ("*", ("+", ("+", "x1", "x2"), "x3"), "x4"), 3),
    _p("d3_prod3_ratio", "x1*x2*x3/(x1+x4)",
       ("/", ("*", ("*", "x1", "x2"), "x3"), ("+", "x1", "x4")), 3),
    _p("d3_prod3_minus", "x1*x2*x3 - x4", ("-", ("*", ("*", "x1", "x2"), "x3"), "x4"), 3),
    _p("d3_diff3_times", "(x1-x2-x3)*x4", ("*", ("-", ("-", "x1", "x2"), "x3"), "x4"), 3),
    _p("d3_wave", "sin(x1*x2)*(x3+x4)", ("*", ("sin", ("*", "x1", "x2")), ("+", "x3", "x4")), 3),
    _p("d3_root_ratio", "sqrt(x1*x2) + x3/x4",
       ("+", ("sqrt", ("*", "x1", "x2")), ("/", "x3", "x4")), 3),
    _p("d3_square_ratio", "(x1+x2)^2*x3/x4", ("*", ("sq", ("+", "x1", "x2")), ("/", "x3", "x4")), 3),
    # depth 4
    _p("d4_root_prod3", "sqrt(x1*x2*x3) + x4",
       ("+", ("sqrt", ("*", ("*", "x1", "x2"), "x3")), "x4"), 4),
    _p("d4_phase", "sin(x1+x2+x3)*x4", ("*", ("sin", ("+", ("+", "x1", "x2"), "x3")), "x4"), 4),
    _p("d4_energy", "(x1*x2*x3 + x4)^2", ("sq", ("+", ("*", ("*", "x1", "x2"), "x3"), "x4")), 4),
    _p("d4_log_prod3", "log(x1*x2*x3)*x4", ("*", ("log", ("*", ("*", "x1", "x2"), "x3")), "x4"), 4),
    _p("d4_root_quot", "sqrt((x1+x2)/(x3*x4))*x1",
       ("*", ("sqrt", ("/", ("+", "x1", "x2"), ("*", "x3", "x4"))), "x1"), 4),
    _p("d4_cubic", "(x1*x2 - x3)^3/x4", ("/", ("cube", ("-", ("*", "x1", "x2"), "x3")), "x4"), 4),
    _p("d4_beat", "sin(x1*x2)*cos(x3*x4) + x1",
       ("+", ("*", ("sin", ("*", "x1", "x2")), ("cos", ("*", "x3", "x4"))), "x1"), 4),
    # depth 5
    _p("d5_root_energy", "sqrt(x1*x2*x3 + x4)*x1",
       ("*", ("sqrt", ("+", ("*", ("*", "x1", "x2"), "x3"), "x4")), "x1"), 5),
    _p("d5_wave", "sin((x1+x2+x3)*x4) + x1",
       ("+", ("sin", ("*", ("+", ("+", "x1", "x2"), "x3"), "x4")), "x1"), 5),
    _p("d5_log_square", "log((x1*x2+x3)^2 + x4)",
       ("log", ("+", ("sq", ("+", ("*", "x1", "x2"), "x3")), "x4")), 5),
    _p("d5_shifted_square", "(sin(x1*x2) + x3)^2*x4",
       ("*", ("sq", ("+", ("sin", ("*", "x1", "x2")), "x3")), "x4"), 5),
    _p("d5_gauss", "exp((x1-x2)^2/(-x3))*x4",
       ("*", ("exp", ("/", ("sq", ("-", "x1", "x2")), ("neg", "x3"))), "x4"), 5),
    _p("d5_inverse_square", "x1/(x2 + x3*x4*x1)^2",
       ("/", "x1", ("sq", ("+", "x2", ("*", ("*", "x3", "x4"), "x1")))), 5),
]

# Not part of the depth classes: the easy recovery case.
_EXTRA = [
    _p("bilinear", "x1*x2 + x3*x4", ("+", ("*", "x1", "x2"), ("*", "x3", "x4")), 2),
]

BUILTIN_PROBLEMS: dict[str, ProblemSpec] = {p.name: p for p in _LIBRARY + _EXTRA}


def problems_at_depth(depth: int) -> list[ProblemSpec]:
    return [p for p in _LIBRARY if p.feasible_depth == depth]


def get_problem(name: str) -> ProblemSpec:
    """Look up a built-in; ``"a|b"`` names a discontinuous combination."""
    if "|" in name:
        a, b = name.split("|", 1)
        return combine_discontinuous(get_problem(a), get_problem(b))
    try:
        return BUILTIN_PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}") from None


# ---------------------------------------------------------------------------
# Expressions

def expr_height(expr) -> int:
    if not isinstance(expr, tuple):
        return 0
    return 1 + max(expr_height(a) for a in expr[1:])


def eval_expr(expr, X: np.ndarray, names: Sequence[str] | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if names is None:
        names = [f"x{i + 1}" for i in range(X.shape[1])]
    col = {n: j for j, n in enumerate(names)}

    def rec(e):
        if isinstance(e, tuple):
            return apply_symbol(e[0], [rec(a) for a in e[1:]])
        if isinstance(e, str):
            return X[:, col[e]]
        return np.full(len(X), float(e))

    with np.errstate(all="ignore"):
        return np.broadcast_to(rec(expr), (len(X),)).astype(np.float64)


def encode(expr, template: TreeTemplate, opset: OperatorSet, filler: str | None = None) -> Genotype:
    """Place an expression in a template using the leftmost child slots.

    Positions the expression does not use are filled with one terminal.
    """
    n = template.node_count
    filler_code = opset.code(filler) if filler else next(
        c for c, s in enumerate(opset.symbols) if s.is_terminal and s.output_type is ValueType.REAL)
    codes, consts, sel = [filler_code] * n, [0.0] * n, [()] * n
    kids = template.children

    def place(e, i):
        if isinstance(e, tuple):
            if template.is_leaf(i):
                raise ValueError(f"expression deeper than template depth {template.depth}")
            op, args = e[0], e[1:]
            if len(args) > template.branching:
                raise ValueError(f"{op} with {len(args)} arguments exceeds branching")
            codes[i] = opset.code(op)
            sel[i] = tuple(range(len(args)))
            for k, a in enumerate(args):
                place(a, kids[i][k])
        elif isinstance(e, str):
            codes[i] = opset.code(e)
        else:
            codes[i] = opset.code("const")
            consts[i] = float(e)

    place(expr, 0)
    return Genotype(template, opset, codes, consts, sel)


# ---------------------------------------------------------------------------
# Data

def generate(spec: ProblemSpec, n: int = 10_000, rng=None) -> Dataset:
    """Uniform samples per variable range (Bernoulli(0.5) for Boolean columns); no noise."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    X = np.empty((n, spec.n_vars))
    for j, ((lo, hi), t) in enumerate(zip(spec.var_ranges, spec.var_types)):
        if t is ValueType.BOOLEAN:
            X[:, j] = rng.integers(0, 2, size=n)
        else:
            X[:, j] = rng.uniform(lo, hi, size=n)
    y = eval_expr(spec.expression, X, spec.var_names)
    return Dataset(X, y, spec.var_types, spec.name, spec.var_names)


def combine_discontinuous(a: ProblemSpec, b: ProblemSpec) -> ProblemSpec:
    """Gate two problems on a new Boolean variable: g=0 gives ``a``, g=1 gives ``b``."""
    if a.feasible_depth != b.feasible_depth:
        raise ValueError(f"cannot combine depth {a.feasible_depth} with depth {b.feasible_depth}")
    if a.n_vars != b.n_vars:
        raise ValueError("combined problems must share their variables")
    gate = f"x{a.n_vars + 1}"
    return ProblemSpec(
        name=f"{a.name}|{b.name}",
        expression=("ite", gate, b.expression, a.expression),
        n_vars=a.n_vars + 1,
        var_ranges=a.var_ranges + ((0.0, 1.0),),
        var_types=a.var_types + (ValueType.BOOLEAN,),
        feasible_depth=a.feasible_depth,
        text=f"if {gate} then {b.text or b.name} else {a.text or a.name}",
    )


def all_combinations(specs: Sequence[ProblemSpec]) -> list[ProblemSpec]:
    return [combine_discontinuous(a, b) for a, b in itertools.combinations(specs, 2)]


def split(d: Dataset, train_fraction: float = 0.75, rng=None) -> tuple[Dataset, Dataset]:
    if d.n_rows < 4:
        raise ValueError("need at least 4 rows to split")
    rng = np.random.default_rng(rng)
    perm = rng.permutation(d.n_rows)
    k = int(math.floor(train_fraction * d.n_rows))
    return d.subset(perm[:k], d.name), d.subset(perm[k:], d.name)


# ---------------------------------------------------------------------------
# CSV

def save_csv(d: Dataset, path) -> None:
    """Header names the columns (``name:bool`` marks Boolean ones); last column is the target."""
    header = [n + (":bool" if t is ValueType.BOOLEAN else "")
              for n, t in zip(d.var_names, d.var_types)] + ["target"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, target in zip(d.X, d.y):
            w.writerow([format(v, ".17g") for v in row] + [format(target, ".17g")])


def load_csv(path, name: str | None = None) -> Dataset:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise IngestionError(f"{path}: {e.strerror}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if len(header) < 2:
            raise IngestionError(f"{path}: need at least one feature and a target column")
        names, types = [], []
        for h in header[:-1]:
            base, _, tag = h.strip().partition(":")
            names.append(base)
            types.append(ValueType.BOOLEAN if tag.lower() in ("bool", "boolean") else ValueType.REAL)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}: row {lineno} has {len(row)} cells, "
                                     f"expected {len(header)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise IngestionError(f"{path}: row {lineno} has a non-numeric cell") from None
            if any(math.isnan(v) for v in vals):
                raise IngestionError(f"{path}: row {lineno} contains NaN")
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    arr = np.array(rows)
    try:
        return Dataset(arr[:, :-1], arr[:, -1], tuple(types), name or path.stem, tuple(names))
    except ValueError as e:
        raise IngestionError(f"{path}: {e}") from e
