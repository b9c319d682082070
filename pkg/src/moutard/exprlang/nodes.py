"""Immutable expression tree over the variables ``r``, ``z`` and named parameters."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Union

VARIABLES = ("r", "z")
FUNCTIONS = ("sin", "cos", "tan", "cot", "exp", "ln", "sqrt")
CONSTANTS = ("pi",)
RESERVED = frozenset(VARIABLES + FUNCTIONS + CONSTANTS)

Number = Union[int, Fraction]


class Expr:
    """Base class of all nodes.

    Nodes are frozen dataclasses; equality is structural and the hash is
    cached because large derivative trees are used as dictionary keys.
    """

    __slots__ = ()

    def _key(self) -> tuple:
        return tuple(getattr(self, f.name) for f in dataclasses.fields(self))

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((type(self).__name__,) + self._key())
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if type(self) is not type(other):
            return False
        if hash(self) != hash(other):
            return False
        return self._key() == other._key()

    def __ne__(self, other: object) -> bool:
        return not self.__eq__(other)

    # operator sugar used when building formulas in code; results are raw,
    # callers simplify when they want canonical form
    def __add__(self, other):
        return Add((self, coerce(other)))

    def __radd__(self, other):
        return Add((coerce(other), self))

    def __sub__(self, other):
        return Sub(self, coerce(other))

    def __rsub__(self, other):
        return Sub(coerce(other), self)

    def __mul__(self, other):
        return Mul((self, coerce(other)))

    def __rmul__(self, other):
        return Mul((coerce(other), self))

    def __truediv__(self, other):
        return Div(self, coerce(other))

    def __rtruediv__(self, other):
        return Div(coerce(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer exponents are supported")
        return Pow(self, n)

    def __str__(self) -> str:
        from .printer import to_text

        return to_text(self)


@dataclass(frozen=True, eq=False)
class Const(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True, eq=False)
class NamedConst(Expr):
    name: str


@dataclass(frozen=True, eq=False)
class Var(Expr):
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"unknown variable {self.name!r}")


@dataclass(frozen=True, eq=False)
class Param(Expr):
    name: str


@dataclass(frozen=True, eq=False)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=False)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


@dataclass(frozen=True, eq=False)
class Add(Expr):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("Add needs at least two operands")


@dataclass(frozen=True, eq=False)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=False)
class Mul(Expr):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("Mul needs at least two operands")


@dataclass(frozen=True, eq=False)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=False)
class Pow(Expr):
    base: Expr
    exp: int

    def __post_init__(self):
        if isinstance(self.exp, bool) or not isinstance(self.exp, int):
            raise TypeError("exponent must be an int")


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
TWO = Const(Fraction(2))
R = Var("r")
Z = Var("z")
PI = NamedConst("pi")


def coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return Const(Fraction(value))
    if isinstance(value, float):
        return Const(Fraction(value).limit_denominator(10**12))
    raise TypeError(f"cannot convert {value!r} to an expression")


def children(e: Expr) -> tuple:
    if isinstance(e, (Add, Mul)):
        return e.args
    if isinstance(e, (Sub, Div)):
        return (e.left, e.right)
    if isinstance(e, (Neg, Func)):
        return (e.arg,)
    if isinstance(e, Pow):
        return (e.base,)
    return ()


@lru_cache(maxsize=65536)
def free_symbols(e: Expr) -> frozenset:
    """Variables and parameters occurring in ``e`` (``pi`` excluded)."""
    if isinstance(e, (Var, Param)):
        return frozenset((e.name,))
    out: frozenset = frozenset()
    for c in children(e):
        out = out | free_symbols(c)
    return out


def parameters(e: Expr) -> frozenset:
    return frozenset(s for s in free_symbols(e) if s not in VARIABLES)


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace variables/parameters by expressions, e.g. ``{"z": z + z0}``."""
    mapping = {k: coerce(v) for k, v in mapping.items()}
    memo: dict = {}

    def go(node: Expr) -> Expr:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, (Var, Param)):
            out = mapping.get(node.name, node)
        elif isinstance(node, Add):
            out = Add(tuple(go(a) for a in node.args))
        elif isinstance(node, Mul):
            out = Mul(tuple(go(a) for a in node.args))
        elif isinstance(node, Sub):
            out = Sub(go(node.left), go(node.right))
        elif isinstance(node, Div):
            out = Div(go(node.left), go(node.right))
        elif isinstance(node, Neg):
            out = Neg(go(node.arg))
        elif isinstance(node, Func):
            out = Func(node.name, go(node.arg))
        elif isinstance(node, Pow):
            out = Pow(go(node.base), node.exp)
        else:
            out = node
        memo[node] = out
        return out

    return go(e)


def size(e: Expr) -> int:
    return 1 + sum(size(c) for c in children(e))


def walk(e: Expr) -> Iterable[Expr]:
    yield e
    for c in children(e):
        yield from walk(c)
