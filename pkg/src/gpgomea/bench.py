"""Configuration x problem x seed matrices, resumable record streams and median aggregation."""

from __future__ import annotations

import json
import logging
import math
import os
import re
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evaluation import Dataset
from .evolution import POP_BASE, ImsRun
from .problems import (
    all_combinations,
    generate,
    get_problem,
    load_csv,
    problems_at_depth,
    split,
)
from .records import RunRecord
from .symbols import BUILTIN_SETS, OperatorSet, builtin_operator_set, custom_operator_set
from .variation import VariantConfig

__all__ = [
    "BenchError",
    "ProblemInstance",
    "MatrixSettings",
    "expand_problems",
    "resolve_problem",
    "resolve_depth",
    "make_opset",
    "run_one",
    "run_matrix",
    "read_records",
    "MedianRow",
    "aggregate_median",
    "lower_median",
    "final_checkpoint",
    "metric_table",
    "mean_of_medians",
    "METRIC_NAMES",
]

log = logging.getLogger(__name__)

METRIC_NAMES = ("train_mse", "test_mse", "train_r2", "test_r2")


class BenchError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Problems and settings

@dataclass
class ProblemInstance:
    name: str
    train: Dataset
    test: Dataset
    feasible_depth: int | None = None


def expand_problems(selectors: Iterable[str]) -> list[str]:
    """Expand ``@depthN`` / ``@combinedN`` group tokens; other selectors pass through."""
    out = []
    for s in selectors:
        m = re.fullmatch(r"@(depth|combined)(\d+)", s)
        if not m:
            out.append(s)
            continue
        specs = problems_at_depth(int(m.group(2)))
        if not specs:
            raise BenchError(f"no built-in problems of depth {m.group(2)}")
        if m.group(1) == "combined":
            specs = all_combinations(specs)
        out.extend(p.name for p in specs)
    return out


@lru_cache(maxsize=64)
def resolve_problem(selector: str, rows: int = 10_000, data_seed: int = 0,
                    train_fraction: float = 0.75) -> ProblemInstance:
    """Sample (or load) and split the data behind a problem selector.

    The same selector, row count and data seed always yield the same split.
    """
    if selector.startswith("csv:"):
        path = selector[4:]
        d = load_csv(path)
        depth = None
        name = Path(path).stem
    else:
        spec = get_problem(selector)
        # per-problem stream so adding problems to a matrix leaves others unchanged
        rng = np.random.default_rng([data_seed, zlib.crc32(selector.encode())])
        d = generate(spec, rows, rng)
        depth = spec.feasible_depth
        name = spec.name
    rng = np.random.default_rng([data_seed, zlib.crc32(name.encode()), 1])
    train, test = split(d, train_fraction, rng)
    return ProblemInstance(name, train, test, depth)


def resolve_depth(depth: int | str, problem: ProblemInstance) -> int:
    if isinstance(depth, int):
        return depth
    m = re.fullmatch(r"feasible(?:-(\d+))?", str(depth))
    if not m:
        raise BenchError(f"invalid depth {depth!r}")
    if problem.feasible_depth is None:
        raise BenchError(f"{problem.name}: no known feasible depth for depth={depth!r}")
    d = problem.feasible_depth - int(m.group(1) or 0)
    if d < 1:
        raise BenchError(f"{problem.name}: depth {depth!r} resolves to {d}")
    return d


def make_opset(operators, train: Dataset, constraint: bool = True,
               constants: bool = True) -> OperatorSet:
    if isinstance(operators, str) and operators in BUILTIN_SETS:
        base = builtin_operator_set(operators, constraint)
    elif isinstance(operators, str):
        raise BenchError(f"unknown operator set {operators!r}")
    else:
        base = custom_operator_set(list(operators), constraint)
    return base.with_terminals(train.var_types, constants, train.var_names)


@dataclass(frozen=True)
class MatrixSettings:
    """Everything shared by the runs of one matrix."""

    budget: int
    checkpoints: tuple[int, ...]
    operators: str | tuple[str, ...] = "T22"
    depth: int | str = 4
    constraint: bool = True
    constants: bool = True
    rows: int = 10_000
    data_seed: int = 0
    train_fraction: float = 0.75
    pop_base: int = POP_BASE


def run_one(cfg: VariantConfig, selector: str, seed: int, s: MatrixSettings,
            **kwargs) -> RunRecord:
    """One IMS run of ``cfg`` on a problem selector; ``kwargs`` go to ImsRun."""
    prob = resolve_problem(selector, s.rows, s.data_seed, s.train_fraction)
    opset = make_opset(s.operators, prob.train, s.constraint, s.constants)
    depth = resolve_depth(s.depth, prob)
    run = ImsRun(cfg, prob.train, prob.test, opset, depth, s.budget, list(s.checkpoints), seed,
                 problem_name=prob.name, pop_base=s.pop_base, **kwargs)
    return run.run()


def _worker(label: str, selector: str, seed: int, s: MatrixSettings) -> dict:
    return run_one(VariantConfig.from_label(label), selector, seed, s).to_dict()


# ---------------------------------------------------------------------------
# Record stream

def read_records(path) -> list[RunRecord]:
    """Records of a JSONL stream; a torn final line (interrupted write) is ignored."""
    path = Path(path)
    if not path.exists():
        return []
    out = []
    try:
        lines = path.read_text().splitlines(keepends=True)
    except OSError as e:
        raise BenchError(f"cannot read {path}: {e.strerror}") from e
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(RunRecord.from_dict(json.loads(line)))
        except (ValueError, TypeError) as e:
            if n == len(lines) and not line.endswith("\n"):
                log.warning("%s: ignoring incomplete final line", path)
                break
            raise BenchError(f"{path}:{n}: malformed record ({e})") from e
    return out


def _repair_tail(path: Path) -> None:
    """Cut a torn final line so appends start on a fresh line."""
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n") + 1
        with open(path, "r+b") as fh:
            fh.truncate(cut)


class _Writer:
    """Single writer for the record stream; one line per finished triple."""

    def __init__(self, path: Path | None):
        self.path = path
        self.fh = None
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                _repair_tail(path)
                self.fh = open(path, "a")
            except OSError as e:
                raise BenchError(f"cannot open record stream {path}: {e.strerror}") from e

    def write(self, rec: RunRecord) -> None:
        if self.fh is None:
            return
        try:
            self.fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
            self.fh.flush()
        except OSError as e:
            raise BenchError(f"writing record {rec.key} to {self.path}: {e.strerror}") from e

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()


def run_matrix(configs: Sequence[VariantConfig], problems: Sequence[str], seeds: Sequence[int],
               settings: MatrixSettings, out=None, jobs: int = 1) -> list[RunRecord]:
    """Run every (config, problem, seed) triple with the same budget and checkpoints.

    With ``out`` set, records stream to that JSONL file as they finish and
    triples already present are skipped. Returns the records in matrix order.
    """
    if not configs or not problems or not seeds:
        raise BenchError("run_matrix needs at least one config, problem and seed")
    problems = expand_problems(problems)
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise BenchError("duplicate configurations in matrix")
    names = {sel: resolve_problem(sel, settings.rows, settings.data_seed,
                                  settings.train_fraction).name for sel in problems}
    for c in configs:
        for sel in problems:
            prob = resolve_problem(sel, settings.rows, settings.data_seed, settings.train_fraction)
            ops = make_opset(settings.operators, prob.train, settings.constraint)
            c.check_template(ops.branching_factor)
            resolve_depth(settings.depth, prob)

    path = Path(out) if out is not None else None
    done: dict[tuple, RunRecord] = {}
    if path is not None:
        for r in read_records(path):
            done[r.key] = r
    todo = [(lab, sel, int(seed)) for lab in labels for sel in problems for seed in seeds
            if (lab, names[sel], int(seed)) not in done]
    log.info("matrix: %d triples, %d already done", len(labels) * len(problems) * len(seeds),
             len(labels) * len(problems) * len(seeds) - len(todo))

    writer = _Writer(path)
    try:
        if jobs <= 1 or len(todo) <= 1:
            for lab, sel, seed in todo:
                try:
                    rec = run_one(VariantConfig.from_label(lab), sel, seed, settings)
                except OSError as e:
                    raise BenchError(f"run {(lab, sel, seed)} failed: {e}") from e
                writer.write(rec)
                done[rec.key] = rec
        else:
            with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as ex:
                futs = {ex.submit(_worker, lab, sel, seed, settings): (lab, sel, seed)
                        for lab, sel, seed in todo}
                for f in as_completed(futs):
                    try:
                        rec = RunRecord.from_dict(f.result())
                    except OSError as e:
                        raise BenchError(f"run {futs[f]} failed: {e}") from e
                    writer.write(rec)
                    done[rec.key] = rec
    finally:
        writer.close()
    return [done[(lab, names[sel], int(seed))] for lab in labels for sel in problems
            for seed in seeds]


# ---------------------------------------------------------------------------
# Aggregation

def lower_median(values: Sequence[float]) -> float:
    """Median with the lower middle element for even counts."""
    vals = sorted(values)
    if not vals:
        raise ValueError("median of an empty sequence")
    return vals[(len(vals) - 1) // 2]


@dataclass
class MedianRow:
    config: str
    problem: str
    fe_threshold: int
    n_seeds: int
    train_mse: float
    test_mse: float
    train_r2: float
    test_r2: float

    def metric(self, name: str) -> float:
        return getattr(self, name)


def aggregate_median(records: Iterable[RunRecord]) -> list[MedianRow]:
    """Median over seeds of every metric per (config, problem, checkpoint)."""
    groups: dict[tuple, dict[str, list[float]]] = {}
    for r in records:
        for c in r.checkpoints:
            g = groups.setdefault((r.config, r.problem, c.fe_threshold),
                                  {m: [] for m in METRIC_NAMES})
            for m in METRIC_NAMES:
                g[m].append(getattr(c, m))
    rows = []
    for (cfg, prob, fe), g in sorted(groups.items()):
        rows.append(MedianRow(cfg, prob, fe, len(g["test_r2"]),
                              **{m: lower_median(g[m]) for m in METRIC_NAMES}))
    return rows


def final_checkpoint(rows: Sequence[MedianRow]) -> int:
    """Largest checkpoint reached by every (config, problem) pair."""
    best: dict[tuple, int] = {}
    for r in rows:
        k = (r.config, r.problem)
        best[k] = max(best.get(k, 0), r.fe_threshold)
    if not best:
        raise ValueError("no aggregate rows")
    return min(best.values())


def metric_table(rows: Sequence[MedianRow], metric: str = "test_r2",
                 checkpoint: int | None = None, configs: Sequence[str] | None = None):
    """``(problems, configs, table)`` with ``table[i, j]`` the median metric of config j on problem i."""
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")
    if checkpoint is None:
        checkpoint = final_checkpoint(rows)
    sel = [r for r in rows if r.fe_threshold == checkpoint]
    configs = list(configs) if configs is not None else sorted({r.config for r in sel})
    problems = sorted({r.problem for r in sel})
    val = {(r.problem, r.config): r.metric(metric) for r in sel}
    table = np.full((len(problems), len(configs)), np.nan)
    for i, p in enumerate(problems):
        for j, c in enumerate(configs):
            if (p, c) not in val:
                raise ValueError(f"no {metric} for config {c!r} on {p!r} at {checkpoint} FEs")
            table[i, j] = val[(p, c)]
    return problems, configs, table


def mean_of_medians(rows: Sequence[MedianRow], metric: str = "test_r2",
                    checkpoint: int | None = None) -> dict[str, dict[str, float]]:
    """Per config: mean over problems of the median metric with a 95% normal-approximation CI."""
    problems, configs, table = metric_table(rows, metric, checkpoint)
    out = {}
    for j, c in enumerate(configs):
        col = table[:, j]
        mean = float(np.mean(col))
        half = 1.959963984540054 * float(np.std(col, ddof=1)) / math.sqrt(len(col)) \
            if len(col) > 1 else 0.0
        out[c] = {"mean": mean, "ci_low": mean - half, "ci_high": mean + half,
                  "n_problems": len(col)}
    return out
