"""Typed operator and terminal vocabulary.

Every symbol has one output type and, for operators, a list of input types.
Boolean values travel through the evaluator as 0.0/1.0 reals, so the type
discipline is purely structural: it is enforced on the genotype, never on
the data.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ValueType",
    "SymbolKind",
    "SymbolSpec",
    "OperatorSet",
    "InvalidCallError",
    "BUILTIN_SETS",
    "builtin_operator_set",
    "custom_operator_set",
    "symbol_semantics",
    "slot_accepts",
    "input_type",
    "check_type_constraints",
]

PROTECT_EPS = 1e-10
EQ_TOL = 1e-9
EXP_CLAMP = 300.0


class ValueType(enum.Enum):
    REAL = "real"
    BOOLEAN = "bool"


class SymbolKind(enum.Enum):
    OPERATOR = "operator"
    VARIABLE = "variable"
    CONSTANT = "constant"


class InvalidCallError(ValueError):
    """Raised when a symbol is applied to the wrong number or kind of inputs."""


R = ValueType.REAL
B = ValueType.BOOLEAN


@dataclass(frozen=True)
class SymbolSpec:
    name: str
    kind: SymbolKind
    arity: int = 0
    commutative: bool = False
    input_types: tuple[ValueType, ...] = ()
    output_type: ValueType = R
    ternary_extension: bool = False
    var_index: int | None = None

    def __post_init__(self):
        if (self.kind is SymbolKind.OPERATOR) != (self.arity >= 1):
            raise ValueError(f"{self.name}: operators need arity >= 1, terminals arity 0")
        if len(self.input_types) != self.arity:
            raise ValueError(f"{self.name}: input_types must have length {self.arity}")
        if self.ternary_extension and (self.arity != 2 or self.name not in TERNARY_NAMES):
            raise ValueError(f"{self.name} cannot be extended to arity 3")

    @property
    def is_terminal(self) -> bool:
        return self.kind is not SymbolKind.OPERATOR

    @property
    def is_constant(self) -> bool:
        return self.kind is SymbolKind.CONSTANT


TERNARY_NAMES = frozenset({"+", "-", "*", "and", "or"})


def _op(name, in_types, out=R, commutative=False, ternary=False):
    return SymbolSpec(name, SymbolKind.OPERATOR, len(in_types), commutative,
                      tuple(in_types), out, ternary)


# Canonical definitions of every operator that appears in a built-in set.
OPERATORS: dict[str, SymbolSpec] = {s.name: s for s in [
    _op("+", (R, R), commutative=True, ternary=True),
    _op("-", (R, R), ternary=True),
    _op("*", (R, R), commutative=True, ternary=True),
    _op("/", (R, R)),
    _op("neg", (R,)),
    _op("inv", (R,)),
    _op("sin", (R,)),
    _op("cos", (R,)),
    _op("log", (R,)),
    _op("exp", (R,)),
    _op("sqrt", (R,)),
    _op("sq", (R,)),
    _op("cube", (R,)),
    _op("pow4", (R,)),
    _op("pow5", (R,)),
    _op("=", (R, R), B, commutative=True),
    _op("<", (R, R), B),
    _op(">", (R, R), B),
    _op("ite", (B, R, R)),
    _op("and", (B, B), B, commutative=True, ternary=True),
    _op("or", (B, B), B, commutative=True, ternary=True),
    _op("not", (B,), B),
]}

# Aliases accepted when a custom set is given as a list of names.
ALIASES = {
    "add": "+", "sub": "-", "mul": "*", "div": "/", "x": "*", "×": "*", "÷": "/",
    "−": "-", "-x": "neg", "1/x": "inv", "x^2": "sq", "x^3": "cube", "x^4": "pow4",
    "x^5": "pow5", "==": "=", "ifthenelse": "ite", "if": "ite", "AND": "and",
    "OR": "or", "NOT": "not", "IfThenElse": "ite",
}

BUILTIN_SETS: dict[str, tuple[str, ...]] = {
    "T22": ("+", "neg", "-", "*", "inv", "/", "sin", "cos", "log", "exp", "sqrt",
            "sq", "cube", "pow4", "pow5", "=", ">", "<", "ite", "and", "or", "not"),
    "T11": ("+", "-", "*", "/", "sin", "log", "sqrt", "sq", "cube", "<", "ite"),
    "B15": ("+", "neg", "-", "*", "inv", "/", "sin", "cos", "log", "exp", "sqrt",
            "sq", "cube", "pow4", "pow5"),
    "B9": ("+", "-", "*", "/", "sin", "log", "sqrt", "sq", "cube"),
    "B4": ("+", "-", "*", "/"),
}


@dataclass(frozen=True)
class OperatorSet:
    """An immutable vocabulary of operators plus terminals.

    ``symbols`` is indexed by integer code; genotypes store those codes.
    """

    symbols: tuple[SymbolSpec, ...]
    arithmetic_boolean_constraint_enabled: bool = True
    name: str = "custom"
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for code, s in enumerate(self.symbols):
            if s.name in index:
                raise ValueError(f"duplicate symbol {s.name!r}")
            index[s.name] = code
        object.__setattr__(self, "index", index)

    @property
    def branching_factor(self) -> int:
        return max((s.arity for s in self.symbols), default=0)

    @property
    def operators(self) -> list[SymbolSpec]:
        return [s for s in self.symbols if not s.is_terminal]

    @property
    def terminals(self) -> list[SymbolSpec]:
        return [s for s in self.symbols if s.is_terminal]

    def code(self, name: str) -> int:
        return self.index[name]

    def __getitem__(self, code: int) -> SymbolSpec:
        return self.symbols[code]

    def __len__(self):
        return len(self.symbols)

    def with_terminals(self, var_types: Sequence[ValueType], constants: bool = True,
                       var_names: Sequence[str] | None = None) -> "OperatorSet":
        """Return a copy with one variable per column and optionally an ERC."""
        if var_names is None:
            var_names = [f"x{i + 1}" for i in range(len(var_types))]
        extra = [SymbolSpec(n, SymbolKind.VARIABLE, output_type=t, var_index=i)
                 for i, (n, t) in enumerate(zip(var_names, var_types))]
        if constants:
            extra.append(SymbolSpec("const", SymbolKind.CONSTANT))
        ops = tuple(s for s in self.symbols if not s.is_terminal)
        return replace(self, symbols=ops + tuple(extra))

    def with_constraint(self, enabled: bool) -> "OperatorSet":
        return replace(self, arithmetic_boolean_constraint_enabled=enabled)


def builtin_operator_set(name: str, constraint: bool = True) -> OperatorSet:
    """Operators of one of the five named sets (terminals are added by the caller)."""
    try:
        names = BUILTIN_SETS[name]
    except KeyError:
        raise ValueError(f"unknown operator set {name!r}; expected one of "
                         f"{sorted(BUILTIN_SETS)}") from None
    return OperatorSet(tuple(OPERATORS[n] for n in names), constraint, name)


def custom_operator_set(names: Sequence[str], constraint: bool = True) -> OperatorSet:
    specs = []
    for n in names:
        key = ALIASES.get(n, n)
        if key not in OPERATORS:
            raise ValueError(f"unknown operator {n!r}")
        specs.append(OPERATORS[key])
    return OperatorSet(tuple(specs), constraint, "custom")


# ---------------------------------------------------------------------------
# Semantics

def _div(a, b):
    safe = np.abs(b) >= PROTECT_EPS
    return np.divide(a, b, out=np.ones(np.broadcast(a, b).shape), where=safe)


def _inv(a):
    safe = np.abs(a) >= PROTECT_EPS
    return np.divide(1.0, a, out=np.ones(np.shape(a)), where=safe)


def _log(a):
    mag = np.abs(a)
    safe = mag >= PROTECT_EPS
    return np.log(mag, out=np.zeros(np.shape(a)), where=safe)


def _bool(x):
    return x.astype(np.float64)


_BINARY: dict[str, Callable] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _div,
    "=": lambda a, b: _bool(np.abs(a - b) <= EQ_TOL),
    "<": lambda a, b: _bool(a < b),
    ">": lambda a, b: _bool(a > b),
    "and": lambda a, b: _bool((a != 0) & (b != 0)),
    "or": lambda a, b: _bool((a != 0) | (b != 0)),
}

_UNARY: dict[str, Callable] = {
    "neg": np.negative,
    "inv": _inv,
    "sin": np.sin,
    "cos": np.cos,
    "log": _log,
    "exp": lambda a: np.exp(np.minimum(a, EXP_CLAMP)),
    "sqrt": lambda a: np.sqrt(np.abs(a)),
    "sq": np.square,
    "cube": lambda a: a * a * a,
    "pow4": lambda a: np.square(np.square(a)),
    "pow5": lambda a: np.square(np.square(a)) * a,
    "not": lambda a: _bool(a == 0),
}


def _ite(c, a, b):
    return np.where(c != 0, a, b)


def apply_symbol(name: str, args: list) -> np.ndarray:
    """Unchecked fast path used by the evaluator."""
    n = len(args)
    if n == 1:
        return _UNARY[name](args[0])
    if n == 2:
        return _BINARY[name](args[0], args[1])
    if name == "ite":
        return _ite(*args)
    f = _BINARY[name]
    return f(f(args[0], args[1]), args[2])


def symbol_semantics(symbol: SymbolSpec, args: Sequence) -> np.ndarray:
    """Apply an operator element-wise to its argument vectors.

    Ternary use of an extensible operator folds left: ``(a op b) op c``.
    """
    if symbol.is_terminal:
        raise InvalidCallError(f"{symbol.name} is a terminal")
    n = len(args)
    if n != symbol.arity and not (symbol.ternary_extension and n == 3):
        raise InvalidCallError(f"{symbol.name} takes {symbol.arity} arguments, got {n}")
    vecs = [np.asarray(a, dtype=np.float64) for a in args]
    if len({v.shape for v in vecs}) != 1:
        raise InvalidCallError(f"{symbol.name}: argument vectors differ in length")
    for k, v in enumerate(vecs):
        if input_type(symbol, k) is B and not np.all((v == 0) | (v == 1)):
            raise InvalidCallError(f"{symbol.name}: argument {k} must be Boolean (0/1)")
    with np.errstate(all="ignore"):
        return apply_symbol(symbol.name, vecs)


# ---------------------------------------------------------------------------
# Type constraints

def input_type(symbol: SymbolSpec, slot: int) -> ValueType:
    """Declared type of argument ``slot``; extended ternary slots reuse slot 0."""
    if slot < symbol.arity:
        return symbol.input_types[slot]
    return symbol.input_types[0]


def slot_accepts(need: ValueType, have: ValueType, constraint_enabled: bool) -> bool:
    if need is have:
        return True
    # Boolean into a numeric slot is the one relaxation the toggle allows.
    return need is R and not constraint_enabled


def check_type_constraints(genotype, opset: OperatorSet | None = None) -> bool:
    """True iff every active parent/child link respects the declared types.

    Intron positions are never inspected. The root is treated as a numeric
    slot: the regression output must be Real unless the arithmetic/Boolean
    constraint is switched off.
    """
    opset = opset or genotype.opset
    enabled = opset.arithmetic_boolean_constraint_enabled
    syms = opset.symbols
    codes, sel = genotype.codes, genotype.sel
    kids = genotype.template.children
    if not slot_accepts(R, syms[codes[0]].output_type, enabled):
        return False
    stack = [0]
    while stack:
        i = stack.pop()
        s = syms[codes[i]]
        if s.is_terminal:
            continue
        slots = sel[i]
        if len(slots) != s.arity and not (s.ternary_extension and len(slots) == 3):
            return False
        for k, slot in enumerate(slots):
            c = kids[i][slot]
            if not slot_accepts(input_type(s, k), syms[codes[c]].output_type, enabled):
                return False
            stack.append(c)
    return True
