"""Per-individual improvement procedures.

All three operators edit an :class:`~gpgomea.evaluation.Individual` in place
through an :class:`~gpgomea.evaluation.Evaluator` and return
``(individual, improved)``; ``improved`` is True iff a strictly better
training fitness was reached. None of them ever commits a worse fitness.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import combinations, permutations

from .evaluation import Evaluator, Individual
from .linkage import LinkageTree
from .template import Genotype, active_nodes, active_order, effective_depths

__all__ = [
    "MaxArity",
    "GcsConfig",
    "VariantConfig",
    "all_variants",
    "child_options",
    "gom",
    "ssi",
    "gcs",
    "donor_index",
]


class MaxArity(enum.IntEnum):
    UP_TO_1 = 1
    UP_TO_2 = 2
    ALL = 3


@dataclass(frozen=True)
class GcsConfig:
    max_arity: MaxArity
    backtrack: bool = False

    @property
    def label(self) -> str:
        return f"{int(self.max_arity)}{'+' if self.backtrack else ''}"


@dataclass(frozen=True)
class VariantConfig:
    gcs: GcsConfig | None = None
    ssi_enabled: bool = False

    @property
    def label(self) -> str:
        parts = [f"gcs{self.gcs.label}"] if self.gcs else []
        if self.ssi_enabled:
            parts.append("ssi")
        return "_".join(parts) or "base"

    @classmethod
    def parse(cls, gcs: str = "off", ssi: bool = False) -> "VariantConfig":
        """Build from the ``off|1|1+|2|2+|3|3+`` notation."""
        gcs = str(gcs).strip().lower()
        if gcs in ("off", "none", "", "0"):
            return cls(None, bool(ssi))
        backtrack = gcs.endswith("+")
        level = gcs.rstrip("+")
        if level not in ("1", "2", "3"):
            raise ValueError(f"invalid gcs setting {gcs!r}; expected off, 1, 1+, 2, 2+, 3 or 3+")
        return cls(GcsConfig(MaxArity(int(level)), backtrack), bool(ssi))

    @classmethod
    def from_label(cls, label: str) -> "VariantConfig":
        parts = label.strip().lower().split("_")
        gcs, ssi = "off", False
        for p in parts:
            if p == "ssi":
                ssi = True
            elif p.startswith("gcs"):
                gcs = p[3:]
            elif p != "base":
                raise ValueError(f"invalid configuration label {label!r}")
        return cls.parse(gcs, ssi)

    def check_template(self, branching: int) -> None:
        if self.gcs and self.gcs.max_arity is MaxArity.ALL and branching < 3:
            raise ValueError("gcs variant 3 needs a template with branching factor 3")


def all_variants(branching: int) -> list[VariantConfig]:
    """The 14 configurations for ternary templates, 10 for binary ones."""
    levels = [MaxArity.UP_TO_1, MaxArity.UP_TO_2] + ([MaxArity.ALL] if branching >= 3 else [])
    gcs_opts = [None] + [GcsConfig(m, bt) for m in levels for bt in (False, True)]
    return [VariantConfig(g, s) for s in (False, True) for g in gcs_opts]


# ---------------------------------------------------------------------------
# GOM

def _pick_other(rng, n: int, exclude: int | None) -> int:
    if exclude is None or n < 2:
        return int(rng.integers(n))
    r = int(rng.integers(n - 1))
    return r + 1 if r >= exclude else r


def gom(ind: Individual, fos: LinkageTree, pop: list[Individual], ev: Evaluator, rng,
        self_index: int | None = None):
    """Gene-pool optimal mixing over every FOS subset in random order.

    Every candidate costs one FE, including edits that leave the genotype
    unchanged; only type-breaking edits are rejected without an FE.
    """
    improved = False
    if len(pop) < 2 and self_index is not None:
        return ind, improved
    g = ind.genotype
    codes, consts, sel = g.codes, g.consts, g.sel
    subsets = fos.subsets
    for k in rng.permutation(len(subsets)):
        dg = pop[_pick_other(rng, len(pop), self_index)].genotype
        dc, dk, ds = dg.codes, dg.consts, dg.sel
        changes = [(p, (dc[p], dk[p], ds[p])) for p in subsets[k]
                   if codes[p] != dc[p] or sel[p] != ds[p] or consts[p] != dk[p]]
        _, better = ev.try_changes(ind, changes)
        improved |= better
    return ind, improved


# ---------------------------------------------------------------------------
# SSI

def donor_index(g: Genotype) -> dict[int, list[tuple[int, int]]]:
    """Map operator code -> [(active node, effective depth)] for one genotype."""
    depths = effective_depths(g)
    syms, codes = g.opset.symbols, g.codes
    out: dict[int, list[tuple[int, int]]] = {}
    for i, dep in depths.items():
        if not syms[codes[i]].is_terminal:
            out.setdefault(codes[i], []).append((i, dep))
    for v in out.values():
        v.sort()
    return out


def _transplant(donor: Genotype, u: int, target: Genotype, v: int) -> list:
    """Edits copying the donor's active subtree at ``u`` onto ``v``'s slots."""
    dk, tk = donor.template.children, target.template.children
    syms = donor.opset.symbols
    changes = []
    stack = [(u, v)]
    while stack:
        a, b = stack.pop()
        node = (donor.codes[a], donor.consts[a], donor.sel[a])
        if node != (target.codes[b], target.consts[b], target.sel[b]):
            changes.append((b, node))
        if not syms[donor.codes[a]].is_terminal:
            for slot in donor.sel[a]:
                stack.append((dk[a][slot], tk[b][slot]))
    return changes


def ssi(ind: Individual, pop: list[Individual], ev: Evaluator, rng,
        self_index: int | None = None, index: list | None = None):
    """Semantic subtree inheritance.

    Each active operator node, in random order, may inherit the subtree of
    a donor node carrying the same operator anywhere in the first donor (in
    random population order) that has one small enough to fit the template
    height below the target node. Positions the donor subtree does not
    cover keep their previous content as introns.
    """
    improved = False
    g = ind.genotype
    t = g.template
    syms = g.opset.symbols
    if index is None:
        index = [donor_index(p.genotype) for p in pop]
    targets = [i for i in active_order(g) if not syms[g.codes[i]].is_terminal]
    rng.shuffle(targets)
    for v in targets:
        if syms[g.codes[v]].is_terminal or v not in active_nodes(g):
            continue
        code, h = g.codes[v], t.height(v)
        found = None
        for d in rng.permutation(len(pop)):
            if d == self_index:
                continue
            fits = [u for u, dep in index[d].get(code, ()) if dep <= h]
            if fits:
                found = (d, fits)
                break
        if found is None:
            continue
        d, fits = found
        u = fits[int(rng.integers(len(fits)))] if len(fits) > 1 else fits[0]
        changes = _transplant(pop[d].genotype, u, g, v)
        _, better = ev.try_changes(ind, changes)
        improved |= better
    return ind, improved


# ---------------------------------------------------------------------------
# GCS

def child_options(arity: int, commutative: bool, branching: int,
                  allow_ternary: bool = False) -> list[tuple[int, ...]]:
    """Ordered child-slot selections an operator may use.

    Commutative operators get one option per unordered slot set. With
    ``allow_ternary`` the arity-3 selections of an extensible binary
    operator are appended.
    """
    if arity < 1 or arity > branching:
        raise ValueError(f"arity {arity} does not fit branching factor {branching}")
    pick = combinations if commutative else permutations
    opts = list(pick(range(branching), arity))
    if allow_ternary and arity < 3 <= branching:
        opts += list(pick(range(branching), 3))
    return opts


def gcs(ind: Individual, cfg: GcsConfig, ev: Evaluator):
    """Greedy child selection in post-order over active operator nodes.

    Every candidate selection, the incumbent included, costs one FE; the
    incumbent wins ties. With ``cfg.backtrack`` a subtree that a new
    selection pulls out of intron status is optimised before moving on.
    """
    g = ind.genotype
    t = g.template
    syms = g.opset.symbols
    kids = t.children
    b = t.branching
    state = {"improved": False}

    def visit(v):
        s = syms[g.codes[v]]
        if s.is_terminal:
            return
        for slot in g.sel[v]:
            visit(kids[v][slot])
        if s.arity > cfg.max_arity or s.arity > b:
            return
        allow3 = cfg.max_arity is MaxArity.ALL and s.ternary_extension and b >= 3
        old_sel = g.sel[v]
        best_sel, best_fit = old_sel, ind.fitness
        code, const = g.codes[v], g.consts[v]
        try:
            for opt in child_options(s.arity, s.commutative, b, allow3):
                log = ev.apply(ind, [(v, (code, const, opt))])
                try:
                    f = ev.score(ind)
                finally:
                    ev.undo(ind, log)
                if f is not None and f.mse < best_fit.mse:
                    best_sel, best_fit = opt, f
        finally:
            # also reached on BudgetExhausted: keep the best selection found
            if best_sel != old_sel:
                ev.apply(ind, [(v, (code, const, best_sel))])
                ev.commit(ind, best_fit, ind.fitness)
                state["improved"] = True
        if cfg.backtrack and best_sel != old_sel:
            for slot in best_sel:
                if slot not in old_sel:
                    visit(kids[v][slot])

    visit(0)
    return ind, state["improved"]


def run_pipeline(ind: Individual, cfg: VariantConfig, fos: LinkageTree, pop: list[Individual],
                 ev: Evaluator, rng, self_index: int | None = None, index=None):
    """GOM, then SSI if enabled, then GCS if enabled."""
    _, improved = gom(ind, fos, pop, ev, rng, self_index)
    if cfg.ssi_enabled:
        _, imp = ssi(ind, pop, ev, rng, self_index, index)
        improved |= imp
    if cfg.gcs is not None:
        _, imp = gcs(ind, cfg.gcs, ev)
        improved |= imp
    return ind, improved
