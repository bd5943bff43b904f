import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpgomea.evaluation import (
    WORST,
    BudgetExhausted,
    Dataset,
    EvalBudget,
    FitnessRecord,
    Individual,
    evaluate_tree,
    fitness,
    mse_r2,
)
from gpgomea.problems import BUILTIN_PROBLEMS, generate
from gpgomea.symbols import check_type_constraints
from gpgomea.template import TreeTemplate, random_init

from helpers import build, dataset, evaluator, opset


def test_evaluate_examples():
    ops = opset("T22")
    d = dataset([[1, 0, 0, 0], [2, 0, 0, 0], [3, 0, 0, 0]])
    assert evaluate_tree(build("x1", 1, ops), d).tolist() == [1, 2, 3]
    d = dataset([[1, 2, 0, 0], [3, 4, 0, 0]])
    assert evaluate_tree(build(("+", "x1", "x2"), 1, ops), d).tolist() == [3, 7]
    d = dataset([[1, 2, 9, 0], [2, 1, 9, 0]])
    g = build(("ite", ("<", "x1", "x2"), "x3", "x4"), 2, ops)
    assert evaluate_tree(g, d).tolist() == [9, 0]


def test_fitness_examples():
    ops = opset("B4", 1)
    X = np.array([[1.0], [2.0], [4.0]])
    d = dataset(X, [1.0, 2.0, 4.0])
    f = fitness(build("x1", 1, ops), d)
    assert f.mse == 0 and f.r2 == 1
    f = fitness(build(float(np.mean(d.y)), 1, ops), d)
    assert f.r2 == pytest.approx(0.0, abs=1e-15)
    d2 = dataset([[0.0], [0.0]], [1.0, 3.0])
    assert fitness(build(0.0, 1, ops), d2).mse == 5.0


def test_fitness_charges_budget():
    ops = opset("B4", 1)
    d = dataset([[1.0], [2.0]], [1.0, 2.0])
    b = EvalBudget(2)
    g = build("x1", 1, ops)
    fitness(g, d, b)
    fitness(g, d, b)
    assert b.used == 2 and b.exhausted
    with pytest.raises(BudgetExhausted):
        fitness(g, d, b)
    assert b.used == 2


def test_non_finite_is_worst():
    ops = opset("B15", 1)
    d = dataset([[300.0], [1.0]], [0.0, 0.0])
    g = build(("sq", ("exp", ("exp", "x1"))), 3, ops)
    f = fitness(g, d)
    assert f.mse == WORST and math.isinf(f.mse)
    assert f.report_r2 == -1e15
    assert FitnessRecord(1e300) < FitnessRecord(WORST)


def test_r2_constant_target():
    assert mse_r2(np.array([2.0, 2.0]), np.array([2.0, 2.0])).r2 == 1.0
    assert mse_r2(np.array([1.0, 2.0]), np.array([2.0, 2.0])).r2 == 0.0


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([1.0]))
    with pytest.raises(ValueError):
        Dataset(np.array([[1.0]]), np.array([np.nan]))
    with pytest.raises(ValueError):
        dataset([[0.5], [1.0]], bool_vars=(0,))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    d = dataset([[0.0], [1.0]], bool_vars=(0,))
    assert d.n_rows == 2 and d.var_names == ("x1",)


@pytest.mark.parametrize("name", sorted(BUILTIN_PROBLEMS))
def test_true_expression_has_unit_r2(name):
    spec = BUILTIN_PROBLEMS[name]
    d = generate(spec, 500, np.random.default_rng(0))
    ops = opset("T22", spec.n_vars)
    g = build(spec.expression, spec.feasible_depth, ops)
    assert check_type_constraints(g)
    f = fitness(g, d)
    assert abs(f.r2 - 1.0) <= 1e-12


@given(st.integers(0, 2**32 - 1))
def test_mse_row_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    ops = opset("B15", 3)
    g = random_init(TreeTemplate(3, 2), ops, rng)
    X = rng.uniform(-2, 2, (50, 3))
    y = rng.normal(size=50)
    perm = rng.permutation(50)
    a = fitness(g, dataset(X, y))
    b = fitness(g, dataset(X[perm], y[perm]))
    assert a.mse == pytest.approx(b.mse, rel=1e-12) or (math.isinf(a.mse) and math.isinf(b.mse))


def test_evaluate_is_deterministic():
    rng = np.random.default_rng(5)
    ops = opset("T22", 4)
    g = random_init(TreeTemplate(3, 3), ops, rng)
    d = dataset(rng.uniform(-2, 2, (30, 4)))
    assert np.array_equal(evaluate_tree(g, d), evaluate_tree(g, d), equal_nan=True)


# ---------------------------------------------------------------------------
# Incremental evaluator

def _random_edit(rng, g):
    """One random node rewrite (any symbol, any selection) at a random position."""
    ops, t = g.opset, g.template
    p = int(rng.integers(t.node_count))
    pool = [c for c, s in enumerate(ops.symbols) if not (t.is_leaf(p) and not s.is_terminal)]
    c = pool[int(rng.integers(len(pool)))]
    s = ops.symbols[c]
    if s.is_terminal:
        sel = ()
    else:
        k = 3 if s.ternary_extension and t.branching == 3 and rng.random() < 0.3 else s.arity
        sel = tuple(int(x) for x in rng.permutation(t.branching)[:k])
    return p, (c, float(rng.uniform(-5, 5)), sel)


@given(st.integers(0, 2**32 - 1))
def test_incremental_matches_full_evaluation(seed):
    rng = np.random.default_rng(seed)
    ops = opset("T22", 5, bool_vars=(4,))
    X = rng.uniform(-3, 3, (25, 5))
    X[:, 4] = rng.integers(0, 2, 25)
    y = rng.normal(size=25)
    d = dataset(X, y, bool_vars=(4,))
    ev = evaluator(d, ops)
    ind = Individual(random_init(TreeTemplate(3, 3), ops, rng))
    ev.evaluate(ind)
    for _ in range(30):
        changes = [_random_edit(rng, ind.genotype) for _ in range(int(rng.integers(1, 4)))]
        snapshot = ind.genotype.copy()
        old_fit = ind.fitness
        log = ev.apply(ind, changes)
        new = ev.score(ind)
        if new is None:
            assert not check_type_constraints(ind.genotype)
        else:
            assert check_type_constraints(ind.genotype)
            ref = fitness(ind.genotype, d)
            assert new.mse == ref.mse or (math.isinf(new.mse) and math.isinf(ref.mse))
        if rng.random() < 0.5 or new is None:
            ev.undo(ind, log)
            assert ind.genotype == snapshot and ind.fitness == old_fit
        else:
            ind.fitness = new
        # every cached entry must equal a fresh evaluation of its subtree
        fresh = Individual(ind.genotype.copy())
        ev2 = evaluator(d, ops)
        ev2.evaluate(fresh)
        for i, arr in enumerate(ind.cache):
            if arr is not None and fresh.cache[i] is not None:
                assert np.array_equal(arr, fresh.cache[i], equal_nan=True)


def test_type_rejection_costs_nothing():
    ops = opset("T22", 2)
    d = dataset([[1.0, 2.0], [3.0, 4.0]], [1.0, 2.0])
    ev = evaluator(d, ops)
    ind = Individual(build(("+", "x1", "x2"), 1, ops))
    ev.evaluate(ind)
    used = ev.budget.used
    ok, better = ev.try_changes(ind, [(0, (ops.code("<"), 0.0, (0, 1)))])
    assert not ok and not better
    assert ev.budget.used == used and ev.n_rejected_type == 1
    assert ind.genotype.symbol(0).name == "+"


def test_noop_edit_costs_one_evaluation():
    ops = opset("B4", 2)
    d = dataset([[1.0, 2.0], [3.0, 4.0]], [3.0, 7.0])
    ev = evaluator(d, ops)
    ind = Individual(build(("+", "x1", "x2"), 1, ops))
    ev.evaluate(ind)
    ok, better = ev.try_changes(ind, [])
    assert ok and not better and ev.budget.used == 2


def test_try_changes_rolls_back_on_exhaustion():
    ops = opset("B4", 2)
    d = dataset([[1.0, 2.0], [3.0, 4.0]], [3.0, 7.0])
    ev = evaluator(d, ops, cap=1)
    ind = Individual(build(("-", "x1", "x2"), 1, ops))
    ev.evaluate(ind)
    before = ind.genotype.copy()
    with pytest.raises(BudgetExhausted):
        ev.try_changes(ind, [(0, (ops.code("+"), 0.0, (0, 1)))])
    assert ind.genotype == before


def test_counting_wrapper_matches_budget():
    """Every charge is one scored candidate or one full evaluation."""
    rng = np.random.default_rng(11)
    ops = opset("B15", 3)
    d = dataset(rng.uniform(-2, 2, (20, 3)), rng.normal(size=20))
    calls = []
    ev = evaluator(d, ops, on_candidate=lambda g: calls.append(1))
    full = 0
    ind = Individual(random_init(TreeTemplate(3, 2), ops, rng))
    ev.evaluate(ind)
    full += 1
    for _ in range(200):
        ev.try_changes(ind, [_random_edit(rng, ind.genotype)])
    assert ev.budget.used == full + len(calls) == full + ev.n_scored
