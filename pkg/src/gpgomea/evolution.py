"""Generational loop, convergence/restart and the interleaved multistart scheme."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .evaluation import (
    BudgetExhausted,
    Dataset,
    EvalBudget,
    Evaluator,
    Individual,
    evaluate_tree,
    mse_r2,
)
from .linkage import learn_linkage_tree
from .records import CheckpointRecord, RunRecord
from .symbols import OperatorSet
from .template import TreeTemplate, random_init, to_expression
from .variation import VariantConfig, donor_index, run_pipeline

__all__ = [
    "PopulationState",
    "Tracker",
    "init_population",
    "generation",
    "converged",
    "restart",
    "ImsRun",
    "run_ims",
    "POP_BASE",
    "INTERLEAVE",
    "TOURNAMENT_SIZE",
]

log = logging.getLogger(__name__)

POP_BASE = 64
INTERLEAVE = 10
TOURNAMENT_SIZE = 4
CONVERGENCE_FRACTION = 0.9
CONVERGENCE_EPS = 1e-8


@dataclass
class PopulationState:
    individuals: list[Individual]
    size: int
    rng: np.random.Generator
    generation: int = 0
    elite: Individual | None = None
    archive: list[Individual] = field(default_factory=list)
    steps: int = 0
    terminated: bool = False
    stalled: bool = False

    def update_elite(self, ind: Individual) -> None:
        if self.elite is None or ind.mse < self.elite.mse:
            self.elite = _slim(ind)

    @property
    def mean_mse(self) -> float:
        return float(np.mean([i.mse for i in self.individuals]))


def _slim(ind: Individual) -> Individual:
    """Copy without the output cache (populations store genotype + fitness only)."""
    return Individual(ind.genotype.copy(), ind.fitness)


class Tracker:
    """Best-so-far individual of a run and the checkpoint log."""

    def __init__(self, budget: EvalBudget, checkpoints, test: Dataset | None):
        self.budget = budget
        self.pending = sorted(int(c) for c in checkpoints)
        self.test = test
        self.elite: Individual | None = None
        self.records: list[CheckpointRecord] = []
        self.elite_history: list[float] = []

    def offer(self, ind: Individual) -> None:
        if ind.fitness is None:
            return
        if self.elite is None or ind.mse < self.elite.mse:
            self.elite = _slim(ind)
            self.elite_history.append(ind.mse)

    def poll(self) -> None:
        while self.pending and self.budget.used >= self.pending[0]:
            self._record(self.pending.pop(0))

    def _record(self, threshold: int) -> None:
        e = self.elite
        if e is None:
            return
        if self.test is not None and self.test.n_rows:
            test = mse_r2(evaluate_tree(e.genotype, self.test), self.test.y)
        else:
            test = e.fitness
        self.records.append(CheckpointRecord(
            fe_threshold=threshold, fes=self.budget.used,
            train_mse=e.fitness.mse, test_mse=test.mse,
            train_r2=e.fitness.report_r2, test_r2=test.report_r2,
            expression=to_expression(e.genotype)))


def init_population(size: int, template: TreeTemplate, opset: OperatorSet, ev: Evaluator,
                    rng, tracker: Tracker | None = None) -> list[Individual]:
    """Random individuals, each evaluated once. May raise BudgetExhausted part-way."""
    out = []
    for _ in range(size):
        ind = Individual(random_init(template, opset, rng))
        ev.evaluate(ind)
        ind.cache = [None] * template.node_count
        out.append(ind)
        if tracker is not None:
            tracker.offer(ind)
            tracker.poll()
    return out


def _tournament(child: Individual, parents: list[Individual], self_index: int, rng) -> Individual:
    n = len(parents)
    others = [j for j in range(n) if j != self_index] if n > 1 else list(range(n))
    k = min(TOURNAMENT_SIZE - 1, len(others))
    best = child
    for j in rng.choice(len(others), size=k, replace=False):
        rival = parents[others[int(j)]]
        if rival.mse < best.mse:
            best = rival
    return child if best is child else _slim(best)


def generation(pop: PopulationState, cfg: VariantConfig, ev: Evaluator,
               tracker: Tracker | None = None) -> PopulationState:
    """One generation: learn the linkage tree, vary every individual, then select.

    An individual whose variation pipeline did not strictly improve it is
    replaced by the winner of a size-4 tournament against three random
    members of the population. On BudgetExhausted the partial offspring is
    committed (remaining parents kept) and the exception propagates.
    """
    rng = pop.rng
    parents = pop.individuals
    fos = learn_linkage_tree(parents, rng)
    index = [donor_index(p.genotype) for p in parents] if cfg.ssi_enabled else None
    offspring: list[Individual] = []
    try:
        for i, parent in enumerate(parents):
            child = parent.copy()
            try:
                _, improved = run_pipeline(child, cfg, fos, parents, ev, rng, i, index)
            except BudgetExhausted:
                child.cache = [None] * len(child.cache)
                offspring.append(child)
                if tracker is not None:
                    tracker.offer(child)
                raise
            child.cache = [None] * len(child.cache)
            if not improved:
                child = _tournament(child, parents, i, rng)
            offspring.append(child)
            pop.update_elite(child)
            if tracker is not None:
                tracker.offer(child)
                tracker.poll()
    except BudgetExhausted:
        pop.individuals = offspring + parents[len(offspring):]
        for ind in offspring:
            pop.update_elite(ind)
        raise
    pop.individuals = offspring
    pop.generation += 1
    return pop


def converged(pop, fraction: float = CONVERGENCE_FRACTION, eps: float = CONVERGENCE_EPS) -> bool:
    """True iff the worst ``ceil(fraction * n)`` individuals share one fitness (relative eps)."""
    inds = pop.individuals if isinstance(pop, PopulationState) else pop
    mses = sorted(i.mse if hasattr(i, "mse") else float(i) for i in inds)
    n = len(mses)
    if n == 0:
        return True
    k = math.ceil(fraction * n - 1e-12)
    worst = mses[n - k:]
    lo, hi = worst[0], worst[-1]
    if lo == hi:
        return True
    if not math.isfinite(hi):
        return False
    return hi - lo <= eps * max(1.0, abs(hi))


def restart(pop: PopulationState, template: TreeTemplate, opset: OperatorSet, ev: Evaluator,
            tracker: Tracker | None = None) -> PopulationState:
    """Fresh random population with one archived elite reinjected at a random slot."""
    rng = pop.rng
    best = min(pop.individuals, key=lambda i: i.mse)
    pop.archive.append(_slim(best))
    slot = int(rng.integers(pop.size))
    elite = _slim(pop.archive[int(rng.integers(len(pop.archive)))])
    fresh: list[Individual] = []
    try:
        for k in range(pop.size):
            if k == slot:
                fresh.append(elite)
                continue
            ind = Individual(random_init(template, opset, rng))
            ev.evaluate(ind)
            ind.cache = [None] * template.node_count
            fresh.append(ind)
            if tracker is not None:
                tracker.offer(ind)
                tracker.poll()
    finally:
        if len(fresh) == pop.size:
            pop.individuals = fresh
            pop.generation = 0
            pop.stalled = False
    return pop


class ImsRun:
    """Interleaved multistart run until the FE budget is spent.

    Population ``i`` has ``pop_base * 2**i`` individuals. After every
    ``interleave`` steps of population ``i``, population ``i + 1`` takes one
    step (and is created on first touch). Converged populations restart with
    elite reinjection; a population is terminated as soon as a larger one
    has a better mean training MSE.
    """

    def __init__(self, cfg: VariantConfig, train: Dataset, test: Dataset | None,
                 opset: OperatorSet, depth: int, budget: int | EvalBudget, checkpoints,
                 seed: int, *, problem_name: str | None = None, pop_base: int = POP_BASE,
                 interleave: int = INTERLEAVE, max_populations: int = 20,
                 evaluator_hook=None, observer=None):
        cfg.check_template(opset.branching_factor)
        if isinstance(budget, int):
            budget = EvalBudget(budget, sorted(checkpoints))
        self.cfg = cfg
        self.opset = opset
        self.depth = depth
        self.seed = int(seed)
        self.problem_name = problem_name or train.name
        self.pop_base = pop_base
        self.interleave = interleave
        self.max_populations = max_populations
        self.observer = observer
        self.budget = budget
        self.template = TreeTemplate(depth, opset.branching_factor)
        self.ev = Evaluator(train, budget, opset, on_candidate=evaluator_hook)
        self.tracker = Tracker(budget, checkpoints, test)
        self.populations: list[PopulationState] = []
        self._seq = np.random.SeedSequence(self.seed)

    def _create(self, i: int) -> PopulationState:
        # one independent stream per population index keeps runs reproducible
        rng = np.random.default_rng(np.random.SeedSequence(self._seq.entropy, spawn_key=(i,)))
        p = PopulationState([], self.pop_base * 2 ** i, rng)
        self.populations.append(p)
        p.individuals = init_population(p.size, self.template, self.opset, self.ev, rng,
                                        self.tracker)
        for ind in p.individuals:
            p.update_elite(ind)
        return p

    def _step(self, i: int) -> None:
        if i >= self.max_populations:
            return
        pops = self.populations
        if i == len(pops):
            self._create(i)
        p = pops[i]
        before = self.budget.used
        if p.stalled or converged(p):
            restart(p, self.template, self.opset, self.ev, self.tracker)
        else:
            generation(p, self.cfg, self.ev, self.tracker)
            # a generation that spent nothing cannot make progress
            p.stalled = self.budget.used == before
        p.steps += 1
        m = p.mean_mse
        for j in range(i):
            if not pops[j].terminated and m < pops[j].mean_mse:
                pops[j].terminated = True
                pops[j].individuals = []
                log.debug("population %d terminated by population %d", j, i)
        if self.observer is not None:
            self.observer(self)
        if p.steps % self.interleave == 0:
            self._step(i + 1)

    def run(self) -> RunRecord:
        with np.errstate(all="ignore"):
            return self._run()

    def _run(self) -> RunRecord:
        try:
            while True:
                first = next((k for k, p in enumerate(self.populations) if not p.terminated),
                             len(self.populations))
                if first >= self.max_populations:
                    break
                self._step(first)
        except BudgetExhausted:
            pass
        self.tracker.poll()
        return RunRecord(config=self.cfg.label, problem=self.problem_name, seed=self.seed,
                         checkpoints=self.tracker.records, total_fes=self.budget.used,
                         operators=self.opset.name, depth=self.depth)


def run_ims(cfg: VariantConfig, train: Dataset, test: Dataset | None, opset: OperatorSet,
            depth: int, budget: int | EvalBudget, checkpoints, seed: int, **kwargs) -> RunRecord:
    return ImsRun(cfg, train, test, opset, depth, budget, checkpoints, seed, **kwargs).run()
