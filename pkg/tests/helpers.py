"""Independent oracles and small builders shared by the test modules."""

from __future__ import annotations

import ast
import itertools

import numpy as np

from gpgomea.evaluation import Dataset, EvalBudget, Evaluator, Individual
from gpgomea.problems import encode
from gpgomea.symbols import B, R, builtin_operator_set, custom_operator_set
from gpgomea.template import Genotype, TreeTemplate, random_init


def opset(name="B4", n_vars=4, bool_vars=(), constants=True, constraint=True, custom=None):
    base = custom_operator_set(custom, constraint) if custom else builtin_operator_set(name, constraint)
    types = [B if i in bool_vars else R for i in range(n_vars)]
    return base.with_terminals(types, constants)


def build(expr, depth, ops, filler=None) -> Genotype:
    return encode(expr, TreeTemplate(depth, ops.branching_factor), ops, filler)


def dataset(X, y=None, bool_vars=()):
    X = np.asarray(X, dtype=float)
    if y is None:
        y = np.zeros(len(X))
    types = tuple(B if j in bool_vars else R for j in range(X.shape[1]))
    return Dataset(X, np.asarray(y, dtype=float), types)


def evaluated(g, ev: Evaluator) -> Individual:
    ind = Individual(g)
    ev.evaluate(ind)
    return ind


def evaluator(d, ops, cap=10**9, **kw) -> Evaluator:
    return Evaluator(d, EvalBudget(cap), ops, **kw)


# ---------------------------------------------------------------------------
# Brute-force oracles

def preorder_enumeration(depth, branching):
    """(node count, children map) by explicit recursive pre-order numbering."""
    children = {}
    counter = itertools.count()

    def walk(d):
        i = next(counter)
        kids = [walk(d + 1) for _ in range(branching)] if d < depth else []
        children[i] = kids
        return i

    walk(0)
    return len(children), children


def mark_and_sweep(g: Genotype) -> set:
    """Reachability by repeated sweeps until no new node is marked."""
    marked = {0}
    changed = True
    while changed:
        changed = False
        for i in range(g.template.node_count):
            if i not in marked or g.symbol(i).is_terminal:
                continue
            for k in g.sel[i]:
                c = g.template.children[i][k]
                if c not in marked:
                    marked.add(c)
                    changed = True
    return marked


def brute_child_options(arity, commutative, branching, allow_ternary, extensible):
    """Every tuple of distinct slots of the right length, filtered by hand."""
    def tuples(k):
        out = []
        for t in itertools.product(range(branching), repeat=k):
            if len(set(t)) != k:
                continue
            if commutative and list(t) != sorted(t):
                continue
            out.append(t)
        return out

    opts = tuples(arity)
    if allow_ternary and extensible and arity < 3 <= branching:
        opts += tuples(3)
    return opts


def entropy(row):
    _, counts = np.unique(row, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mi_oracle(a, b):
    """Plug-in mutual information from an explicit joint table."""
    n = len(a)
    total = 0.0
    for x in set(a):
        for y in set(b):
            pxy = sum(1 for i in range(n) if a[i] == x and b[i] == y) / n
            if pxy == 0:
                continue
            px = sum(1 for v in a if v == x) / n
            py = sum(1 for v in b if v == y) / n
            total += pxy * np.log(pxy / (px * py))
    return total


def check_linkage_tree(lt, n):
    """2n-1 distinct subsets, all singletons and the full set, each merge of two earlier ones."""
    subsets = [frozenset(s) for s in lt.subsets]
    assert len(subsets) == 2 * n - 1
    assert len(set(subsets)) == len(subsets)
    assert all(frozenset([i]) in subsets for i in range(n))
    assert frozenset(range(n)) in subsets
    seen = []
    for s in subsets:
        if len(s) > 1:
            assert any(a | b == s and not a & b for a in seen for b in seen), s
        seen.append(s)


def random_population(rng, max_nodes=40):
    """Random genotypes of a random built-in set and depth with node_count <= max_nodes."""
    name = str(rng.choice(["B4", "B15", "T11", "T22"]))
    ops = opset(name, 4)
    depth = int(rng.integers(1, 4 if ops.branching_factor == 2 else 3))
    t = TreeTemplate(depth, ops.branching_factor)
    assert t.node_count <= max_nodes
    size = int(rng.integers(2, 40))
    return [random_init(t, ops, rng) for _ in range(size)], t.node_count


# Type table written out by hand, independent of the engine's symbol specs.
_BOOL_OUT = {"<", ">", "=", "and", "or", "not"}
_BOOL_IN = {"and", "or", "not"}


def type_oracle(g: Genotype, bool_vars=()) -> tuple[bool, bool]:
    """``(well_typed, ite_conditions_boolean)`` for the active tree of a constrained genotype."""
    kids = g.template.children
    ok = True
    ite_ok = True

    def out_type(i):
        s = g.symbol(i)
        if s.is_terminal:
            return "B" if s.var_index is not None and s.var_index in bool_vars else "R"
        return "B" if s.name in _BOOL_OUT else "R"

    def walk(i):
        nonlocal ok, ite_ok
        s = g.symbol(i)
        if s.is_terminal:
            return
        for k, slot in enumerate(g.sel[i]):
            c = kids[i][slot]
            if s.name in _BOOL_IN or (s.name == "ite" and k == 0):
                want = "B"
            else:
                want = "R"
            have = out_type(c)
            if have != want:
                ok = False
                if s.name == "ite" and k == 0:
                    ite_ok = False
            walk(c)

    walk(0)
    if out_type(0) != "R":
        ok = False
    return ok, ite_ok


# ---------------------------------------------------------------------------
# Parsing printed expressions back into numbers

def _protected(name):
    def div(a, b):
        return np.where(np.abs(b) < 1e-10, 1.0, a / np.where(np.abs(b) < 1e-10, 1.0, b))

    table = {
        "div": div,
        "inv": lambda a: div(np.ones_like(a), a),
        "sin": np.sin,
        "cos": np.cos,
        "log": lambda a: np.where(np.abs(a) < 1e-10, 0.0,
                                  np.log(np.where(np.abs(a) < 1e-10, 1.0, np.abs(a)))),
        "exp": lambda a: np.exp(np.minimum(a, 300.0)),
        "sqrt": lambda a: np.sqrt(np.abs(a)),
        "neg": lambda a: -a,
        "not": lambda a: 1.0 - a,
        "ite": lambda c, a, b: np.where(c > 0.5, a, b),
    }
    return table[name]


class _Eval(ast.NodeVisitor):
    def __init__(self, cols, n):
        self.cols = cols
        self.n = n
        # per row, the largest |argument| passed to a periodic function
        self.periodic_arg = np.zeros(n)

    def visit_Expression(self, node):
        return self.visit(node.body)

    def visit_Name(self, node):
        return self.cols[node.id]

    def visit_Constant(self, node):
        return np.full(self.n, float(node.value))

    def visit_UnaryOp(self, node):
        if isinstance(node.op, ast.Not):
            return 1.0 - (self.visit(node.operand) > 0.5)
        assert isinstance(node.op, ast.USub)
        inner = node.operand
        # the printer never negates a subexpression, so "-c ^ n" means (-c) ^ n
        if isinstance(inner, ast.BinOp) and isinstance(inner.op, ast.Pow):
            return (-self.visit(inner.left)) ** self.visit(inner.right)
        return -self.visit(inner)

    def visit_BinOp(self, node):
        a, b = self.visit(node.left), self.visit(node.right)
        op = node.op
        if isinstance(op, ast.Add):
            return a + b
        if isinstance(op, ast.Sub):
            return a - b
        if isinstance(op, ast.Mult):
            return a * b
        if isinstance(op, ast.Div):
            return _protected("div")(a, b)
        if isinstance(op, ast.Pow):
            return a ** b
        raise AssertionError(op)

    def visit_BoolOp(self, node):
        vals = [self.visit(v) > 0.5 for v in node.values]
        f = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
        out = vals[0]
        for v in vals[1:]:
            out = f(out, v)
        return out.astype(float)

    def visit_Compare(self, node):
        a, b = self.visit(node.left), self.visit(node.comparators[0])
        op = node.ops[0]
        if isinstance(op, ast.Lt):
            return (a < b).astype(float)
        if isinstance(op, ast.Gt):
            return (a > b).astype(float)
        if isinstance(op, ast.Eq):
            return (np.abs(a - b) <= 1e-9).astype(float)
        raise AssertionError(op)

    def visit_Call(self, node):
        args = [self.visit(a) for a in node.args]
        if node.func.id in ("sin", "cos"):
            mag = np.where(np.isfinite(args[0]), np.abs(args[0]), 0.0)
            self.periodic_arg = np.maximum(self.periodic_arg, mag)
        return _protected(node.func.id)(*args)


def eval_printed(text: str, X: np.ndarray, names=None, periodic_arg=None) -> np.ndarray:
    """Evaluate a printed infix expression with an ast walk (independent of the engine).

    If ``periodic_arg`` is an array it receives, per row, the largest |argument|
    seen by sin or cos, which bounds how far last-ulp differences can propagate.
    """
    names = names or [f"x{i + 1}" for i in range(X.shape[1])]
    src = text.replace("if(", "ite(").replace("^", "**")
    tree = ast.parse(src, mode="eval")
    cols = {n: X[:, j].astype(float) for j, n in enumerate(names)}
    ev = _Eval(cols, len(X))
    with np.errstate(all="ignore"):
        out = ev.visit(tree)
    if periodic_arg is not None:
        periodic_arg[:] = ev.periodic_arg
    return np.broadcast_to(out, (len(X),)).astype(float)


# Criterion lines collected by the acceptance module, printed in the terminal summary.
ACCEPTANCE: list[str] = []
