"""Fixed-size perfect-tree templates and the pre-order genotype."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .symbols import (
    OperatorSet,
    SymbolSpec,
    ValueType,
    input_type,
    slot_accepts,
)

__all__ = [
    "TreeTemplate",
    "Genotype",
    "InitializationError",
    "node_index_children",
    "active_nodes",
    "subtree_effective_depth",
    "random_init",
    "to_expression",
    "CONST_RANGE",
]

CONST_RANGE = (-5.0, 5.0)


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TreeTemplate:
    """A perfect tree of the given depth; root at depth 0, leaves at ``depth``."""

    depth: int
    branching: int
    node_count: int = field(init=False)
    children: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    parent: tuple[int, ...] = field(init=False, repr=False, compare=False)
    node_depth: tuple[int, ...] = field(init=False, repr=False, compare=False)
    ancestors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("template depth must be >= 0")
        if self.branching < 1:
            raise ValueError("branching must be >= 1")
        b, d = self.branching, self.depth
        if b == 1:
            n = d + 1
        else:
            n = (b ** (d + 1) - 1) // (b - 1)
        children, parent, depths = [], [-1] * n, [0] * n
        for i in range(n):
            children.append(())
        # walk the pre-order layout once
        stack = [(0, 0)]
        while stack:
            i, di = stack.pop()
            depths[i] = di
            if di < d:
                s = _subtree_size(b, d - di - 1)
                kids = tuple(i + 1 + k * s for k in range(b))
                children[i] = kids
                for c in kids:
                    parent[c] = i
                    stack.append((c, di + 1))
        anc = []
        for i in range(n):
            chain, p = [], i
            while p != -1:
                chain.append(p)
                p = parent[p]
            anc.append(tuple(chain))
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "children", tuple(children))
        object.__setattr__(self, "parent", tuple(parent))
        object.__setattr__(self, "node_depth", tuple(depths))
        object.__setattr__(self, "ancestors", tuple(anc))

    def height(self, i: int) -> int:
        """Template levels available below node ``i``."""
        return self.depth - self.node_depth[i]

    def is_leaf(self, i: int) -> bool:
        return self.node_depth[i] == self.depth

    def subtree_positions(self, i: int) -> range:
        return range(i, i + _subtree_size(self.branching, self.height(i)))


@lru_cache(maxsize=None)
def _subtree_size(b: int, height: int) -> int:
    if b == 1:
        return height + 1
    return (b ** (height + 1) - 1) // (b - 1)


def node_index_children(template: TreeTemplate, i: int) -> list[int]:
    return list(template.children[i])


class Genotype:
    """Pre-order symbol string over a template.

    ``codes[i]`` indexes ``opset.symbols``; ``consts[i]`` is the value of a
    constant terminal (0.0 elsewhere); ``sel[i]`` lists the child slots an
    operator consumes, in argument order. Terminals have ``sel[i] == ()``.
    """

    __slots__ = ("template", "opset", "codes", "consts", "sel")

    def __init__(self, template, opset, codes, consts=None, sel=None):
        self.template = template
        self.opset = opset
        self.codes = list(codes)
        n = template.node_count
        if len(self.codes) != n:
            raise ValueError(f"expected {n} nodes, got {len(self.codes)}")
        self.consts = [0.0] * n if consts is None else [float(c) for c in consts]
        if sel is None:
            sel = [tuple(range(opset[c].arity)) for c in self.codes]
        self.sel = [tuple(s) for s in sel]

    def copy(self) -> "Genotype":
        g = Genotype.__new__(Genotype)
        g.template = self.template
        g.opset = self.opset
        g.codes = self.codes[:]
        g.consts = self.consts[:]
        g.sel = self.sel[:]
        return g

    def symbol(self, i: int) -> SymbolSpec:
        return self.opset.symbols[self.codes[i]]

    def node(self, i: int) -> tuple:
        return self.codes[i], self.consts[i], self.sel[i]

    def set_node(self, i: int, node: tuple) -> None:
        self.codes[i], self.consts[i], self.sel[i] = node

    def __eq__(self, other):
        if not isinstance(other, Genotype):
            return NotImplemented
        return (self.template == other.template and self.codes == other.codes
                and self.consts == other.consts and self.sel == other.sel)

    def __repr__(self):
        return f"Genotype({to_expression(self)!r})"

    def validate(self) -> None:
        """Raise ValueError if structural invariants are broken."""
        t, syms = self.template, self.opset.symbols
        b = t.branching
        for i, code in enumerate(self.codes):
            s = syms[code]
            if t.is_leaf(i) and not s.is_terminal:
                raise ValueError(f"leaf position {i} holds operator {s.name}")
            slots = self.sel[i]
            if len(set(slots)) != len(slots) or any(not 0 <= k < b for k in slots):
                raise ValueError(f"bad child selection {slots} at {i}")
            if s.is_terminal and slots:
                raise ValueError(f"terminal at {i} has child selection")
            if not s.is_terminal and len(slots) != s.arity and not (
                    s.ternary_extension and len(slots) == 3):
                raise ValueError(f"arity mismatch at {i}")


def active_nodes(g: Genotype) -> set[int]:
    kids, syms, codes, sel = g.template.children, g.opset.symbols, g.codes, g.sel
    seen = set()
    stack = [0]
    while stack:
        i = stack.pop()
        seen.add(i)
        if not syms[codes[i]].is_terminal:
            stack.extend(kids[i][k] for k in sel[i])
    return seen


def active_order(g: Genotype) -> list[int]:
    """Active nodes in pre-order of the phenotype."""
    kids, syms, codes, sel = g.template.children, g.opset.symbols, g.codes, g.sel
    out = []
    stack = [0]
    while stack:
        i = stack.pop()
        out.append(i)
        if not syms[codes[i]].is_terminal:
            stack.extend(kids[i][k] for k in reversed(sel[i]))
    return out


def subtree_effective_depth(g: Genotype, i: int) -> int:
    if i not in active_nodes(g):
        raise ValueError(f"node {i} is an intron")
    return _eff_depth(g, i)


def _eff_depth(g: Genotype, i: int) -> int:
    s = g.opset.symbols[g.codes[i]]
    if s.is_terminal:
        return 0
    kids = g.template.children[i]
    return 1 + max(_eff_depth(g, kids[k]) for k in g.sel[i])


def effective_depths(g: Genotype) -> dict[int, int]:
    """Active-subtree height for every active node, in one bottom-up pass."""
    order = active_order(g)
    kids, syms, codes, sel = g.template.children, g.opset.symbols, g.codes, g.sel
    out = {}
    for i in reversed(order):
        if syms[codes[i]].is_terminal:
            out[i] = 0
        else:
            out[i] = 1 + max(out[kids[i][k]] for k in sel[i])
    return out


# ---------------------------------------------------------------------------
# Initialization

class _Sampler:
    """Per-(type, height) admissible symbol tables for one opset."""

    def __init__(self, opset: OperatorSet, depth: int):
        self.opset = opset
        enabled = opset.arithmetic_boolean_constraint_enabled
        syms = opset.symbols
        # producible[t][h]: some symbol of type t fits within height h
        producible = {t: [False] * (depth + 1) for t in ValueType}
        for h in range(depth + 1):
            for s in syms:
                if s.is_terminal:
                    producible[s.output_type][h] = True
                elif h >= 1 and all(self._fillable(producible, t, h - 1, enabled)
                                    for t in s.input_types):
                    producible[s.output_type][h] = True
        self.producible = producible
        self.table = {}
        for need in ValueType:
            for h in range(depth + 1):
                ok = []
                for code, s in enumerate(syms):
                    if not slot_accepts(need, s.output_type, enabled):
                        continue
                    if s.is_terminal:
                        ok.append(code)
                    elif h >= 1 and all(self._fillable(producible, t, h - 1, enabled)
                                        for t in s.input_types):
                        ok.append(code)
                self.table[need, h] = ok

    @staticmethod
    def _fillable(producible, need, h, enabled):
        return any(producible[t][h] for t in ValueType if slot_accepts(need, t, enabled))


@lru_cache(maxsize=64)
def _sampler(opset: OperatorSet, depth: int) -> _Sampler:
    return _Sampler(opset, depth)


def random_init(template: TreeTemplate, opset: OperatorSet, rng) -> Genotype:
    """Grow-style random genotype obeying the type constraints.

    Each position draws uniformly among the symbols admissible for its
    required type that can still be completed in the remaining height, which
    is the distribution per-position rejection sampling converges to. Leaves
    draw terminals only. Unused child slots are filled with independent
    Real-typed subtrees so later child selection finds usable material.
    """
    sampler = _sampler(opset, template.depth)
    syms = opset.symbols
    n = template.node_count
    codes = [0] * n
    consts = [0.0] * n
    sel: list[tuple] = [()] * n
    lo, hi = CONST_RANGE
    stack = [(0, ValueType.REAL)]
    while stack:
        i, need = stack.pop()
        h = template.height(i)
        choices = sampler.table[need, h]
        if not choices:
            # intron slots may ask for a type the set cannot make; any terminal will do
            choices = sampler.table[ValueType.REAL, 0] or sampler.table[ValueType.BOOLEAN, 0]
            if i == 0 or not choices:
                raise InitializationError(
                    f"operator set cannot produce a {need.value} value within height {h}")
        code = choices[int(rng.integers(len(choices)))]
        s = syms[code]
        codes[i] = code
        if s.is_constant:
            consts[i] = float(rng.uniform(lo, hi))
        if s.is_terminal:
            # still fill the template subtree below so every position holds a symbol
            for k, c in enumerate(template.children[i]):
                stack.append((c, ValueType.REAL))
            continue
        sel[i] = tuple(range(s.arity))
        for k, c in enumerate(template.children[i]):
            stack.append((c, input_type(s, k) if k < s.arity else ValueType.REAL))
    g = Genotype(template, opset, codes, consts, sel)
    return g


# ---------------------------------------------------------------------------
# Printing

_INFIX = {"+": "+", "-": "-", "*": "*", "/": "/", "=": "==", "<": "<", ">": ">",
          "and": "and", "or": "or"}
_POWERS = {"sq": 2, "cube": 3, "pow4": 4, "pow5": 5}


def to_expression(g: Genotype, i: int = 0) -> str:
    s = g.opset.symbols[g.codes[i]]
    if s.is_constant:
        return f"{g.consts[i]:.6g}"
    if s.is_terminal:
        return s.name
    kids = g.template.children[i]
    args = [to_expression(g, kids[k]) for k in g.sel[i]]
    if s.name in _INFIX:
        return "(" + f" {_INFIX[s.name]} ".join(args) + ")"
    if s.name in _POWERS:
        return f"({args[0]} ^ {_POWERS[s.name]})"
    if s.name == "ite":
        return f"if({args[0]}, {args[1]}, {args[2]})"
    return f"{s.name}({', '.join(args)})"

