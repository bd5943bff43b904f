"""Tree evaluation, error metrics and function-evaluation accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .symbols import R, ValueType, apply_symbol, input_type, slot_accepts
from .template import Genotype

__all__ = [
    "Dataset",
    "FitnessRecord",
    "EvalBudget",
    "BudgetExhausted",
    "WORST",
    "R2_FLOOR",
    "evaluate_tree",
    "fitness",
    "mse_r2",
    "Individual",
    "Evaluator",
]

WORST = math.inf
R2_FLOOR = -1e15


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    var_types: tuple[ValueType, ...] = ()
    name: str = "data"
    var_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError("X must be n_rows x n_vars and y of length n_rows")
        if not self.var_types:
            self.var_types = tuple(ValueType.REAL for _ in range(self.n_vars))
        self.var_types = tuple(self.var_types)
        if not self.var_names:
            self.var_names = tuple(f"x{i + 1}" for i in range(self.n_vars))
        self.var_names = tuple(self.var_names)
        if len(self.var_types) != self.n_vars or len(self.var_names) != self.n_vars:
            raise ValueError("one type and one name per column required")
        if np.isnan(self.X).any() or np.isnan(self.y).any():
            raise ValueError(f"{self.name}: NaN in data")
        for j, t in enumerate(self.var_types):
            if t is ValueType.BOOLEAN and not np.all(np.isin(self.X[:, j], (0.0, 1.0))):
                raise ValueError(f"{self.name}: Boolean column {j} holds values outside {{0, 1}}")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_vars(self) -> int:
        return self.X.shape[1]

    def subset(self, rows, name=None) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.var_types, name or self.name,
                       self.var_names)


@dataclass(frozen=True, order=True)
class FitnessRecord:
    mse: float
    r2: float = 0.0

    @property
    def report_r2(self) -> float:
        return max(self.r2, R2_FLOOR)


class BudgetExhausted(Exception):
    """The function-evaluation cap has been reached."""


@dataclass
class EvalBudget:
    cap: int
    checkpoints: list[int] = field(default_factory=list)
    used: int = 0

    def charge(self) -> None:
        if self.used >= self.cap:
            raise BudgetExhausted(self.used)
        self.used += 1

    @property
    def exhausted(self) -> bool:
        return self.used >= self.cap


def mse_r2(pred: np.ndarray, y: np.ndarray, var_y: float | None = None) -> FitnessRecord:
    r = pred - y
    mse = float(np.dot(r, r)) / len(y)
    if not math.isfinite(mse):
        return FitnessRecord(WORST, -math.inf)
    if var_y is None:
        var_y = float(np.var(y))
    if var_y > 0:
        r2 = 1.0 - mse / var_y
    else:
        r2 = 1.0 if mse == 0 else 0.0
    return FitnessRecord(mse, r2)


def evaluate_tree(g: Genotype, d: Dataset) -> np.ndarray:
    """Output of the phenotype on every row of ``d``; introns are never touched."""
    syms = g.opset.symbols
    kids = g.template.children
    n = d.n_rows

    def rec(i):
        s = syms[g.codes[i]]
        if s.var_index is not None:
            return d.X[:, s.var_index]
        if s.is_constant:
            return np.full(n, g.consts[i])
        return apply_symbol(s.name, [rec(kids[i][k]) for k in g.sel[i]])

    with np.errstate(all="ignore"):
        out = rec(0)
    return np.broadcast_to(out, (n,)).astype(np.float64, copy=True)


def fitness(g: Genotype, d: Dataset, budget: EvalBudget | None = None) -> FitnessRecord:
    """MSE and R2 of ``g`` on ``d``; costs one function evaluation."""
    if budget is not None:
        budget.charge()
    with np.errstate(all="ignore"):
        return mse_r2(evaluate_tree(g, d), d.y)


# ---------------------------------------------------------------------------
# Incremental evaluation

class Individual:
    """A genotype with its training fitness and per-node output cache.

    ``cache[i]`` holds the output of the template subtree at ``i`` for the
    current genotype, or None when unknown. Arrays in the cache are never
    mutated, so copies may share them.
    """

    __slots__ = ("genotype", "fitness", "cache")

    def __init__(self, genotype: Genotype, fitness: FitnessRecord | None = None, cache=None):
        self.genotype = genotype
        self.fitness = fitness
        self.cache = cache if cache is not None else [None] * genotype.template.node_count

    @property
    def mse(self) -> float:
        return self.fitness.mse

    def copy(self) -> "Individual":
        return Individual(self.genotype.copy(), self.fitness, self.cache[:])


class TypeViolation(Exception):
    pass


class Evaluator:
    """Scores genotype edits on a training set while charging the budget.

    Variation operators work through ``apply`` / ``score`` / ``undo``:
    ``apply`` writes node changes in place and invalidates affected cache
    entries, ``score`` type-checks the active tree and evaluates it (one FE,
    or None without charge when a type constraint fails), ``undo`` restores
    the previous state exactly.
    """

    def __init__(self, data: Dataset, budget: EvalBudget, opset,
                 on_candidate: Callable | None = None):
        self.data = data
        self.budget = budget
        self.opset = opset
        self.syms = opset.symbols
        self.enabled = opset.arithmetic_boolean_constraint_enabled
        self.n = data.n_rows
        self.columns = [np.ascontiguousarray(data.X[:, j]) for j in range(data.n_vars)]
        self.y = data.y
        self.var_y = float(np.var(data.y))
        self.on_candidate = on_candidate
        # event counters: scored candidates, type rejections, committed worsenings
        self.n_scored = 0
        self.n_rejected_type = 0
        self.violations = 0
        # flat per-code lookups for the hot path
        self._term = [s.is_terminal for s in self.syms]
        self._var = [s.var_index for s in self.syms]
        self._name = [s.name for s in self.syms]
        self._out = [s.output_type for s in self.syms]
        self._in = [tuple(input_type(s, k) for k in range(3 if s.ternary_extension else s.arity))
                    for s in self.syms]
        self._root_ok = [slot_accepts(R, s.output_type, self.enabled) for s in self.syms]

    # -- full evaluation -------------------------------------------------

    def evaluate(self, ind: Individual) -> FitnessRecord:
        """Evaluate from scratch (one FE) and set ``ind.fitness``."""
        ind.cache = [None] * ind.genotype.template.node_count
        out = self._eval(ind.genotype, ind.cache)
        if out is None:
            raise ValueError(f"genotype violates type constraints: {ind.genotype!r}")
        self.budget.charge()
        ind.fitness = mse_r2(out, self.y, self.var_y)
        return ind.fitness

    def _eval(self, g: Genotype, cache: list):
        codes, consts, sel = g.codes, g.consts, g.sel
        kids = g.template.children
        if not self._root_ok[codes[0]]:
            return None
        term, var, name, outt, intypes = (self._term, self._var, self._name, self._out,
                                          self._in)
        enabled = self.enabled
        cols, n = self.columns, self.n

        def rec(i):
            out = cache[i]
            if out is not None:
                return out
            c = codes[i]
            if term[c]:
                v = var[c]
                out = cols[v] if v is not None else np.full(n, consts[i])
            else:
                need = intypes[c]
                args = []
                for k, slot in enumerate(sel[i]):
                    ch = kids[i][slot]
                    have = outt[codes[ch]]
                    if have is not need[k] and not slot_accepts(need[k], have, enabled):
                        raise TypeViolation
                    args.append(rec(ch))
                out = apply_symbol(name[c], args)
            cache[i] = out
            return out

        # callers on the hot path run under np.errstate(all="ignore")
        try:
            return rec(0)
        except TypeViolation:
            return None

    # -- incremental edits ------------------------------------------------

    def apply(self, ind: Individual, changes) -> list:
        """Write ``(pos, node)`` pairs into ``ind``; returns an undo log."""
        g, cache = ind.genotype, ind.cache
        codes, consts, sel = g.codes, g.consts, g.sel
        anc = g.template.ancestors
        log_nodes = [(p, codes[p], consts[p], sel[p]) for p, _ in changes]
        dirty = {}
        for p, (c, k, s) in changes:
            codes[p] = c
            consts[p] = k
            sel[p] = s
            for a in anc[p]:
                if a in dirty:
                    break
                dirty[a] = cache[a]
                cache[a] = None
        return [log_nodes, dirty, ind.fitness]

    def undo(self, ind: Individual, log) -> None:
        log_nodes, dirty, fit = log
        g, cache = ind.genotype, ind.cache
        codes, consts, sel = g.codes, g.consts, g.sel
        for p, c, k, s in reversed(log_nodes):
            codes[p] = c
            consts[p] = k
            sel[p] = s
        # entries computed for previously unknown nodes stay valid only if
        # their subtree was untouched; dropping everything dirty is enough
        for a, old in dirty.items():
            cache[a] = old
        ind.fitness = fit

    def score(self, ind: Individual) -> FitnessRecord | None:
        """Fitness of the current (edited) genotype, or None on a type violation."""
        g, cache = ind.genotype, ind.cache
        out = self._eval(g, cache)
        if out is None:
            self.n_rejected_type += 1
            return None
        self.budget.charge()
        self.n_scored += 1
        if self.on_candidate is not None:
            self.on_candidate(g)
        return mse_r2(out, self.y, self.var_y)

    def try_changes(self, ind: Individual, changes) -> tuple[bool, bool]:
        """Apply, score and keep the edit iff fitness does not get worse.

        Returns ``(accepted, strictly_improved)``. On BudgetExhausted the edit
        is rolled back before the exception propagates.
        """
        old = ind.fitness
        log = self.apply(ind, changes)
        try:
            new = self.score(ind)
        except BudgetExhausted:
            self.undo(ind, log)
            raise
        if new is None or new.mse > old.mse:
            self.undo(ind, log)
            return False, False
        self.commit(ind, new, old)
        return True, new.mse < old.mse

    def commit(self, ind: Individual, new: FitnessRecord, old: FitnessRecord) -> None:
        if new.mse > old.mse:
            self.violations += 1
        ind.fitness = new


def predict(g: Genotype, X: np.ndarray, var_types: Sequence[ValueType] | None = None) -> np.ndarray:
    d = Dataset(np.asarray(X, dtype=float), np.zeros(len(X)),
                tuple(var_types) if var_types else ())
    return evaluate_tree(g, d)
