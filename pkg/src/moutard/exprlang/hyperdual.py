"""Second-order forward-mode differentiation in the two variables r and z.

A :class:`HyperDual` carries a value together with its first and second
partial derivatives.  Components may be floats or numpy arrays of a common
shape, so the same arithmetic serves single points and batches.
"""
from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from .errors import DomainError, UnboundParameterError
from .nodes import Add, Const, Div, Expr, Func, Mul, NamedConst, Neg, Param, Pow, Sub, Var
from .printer import to_text


class HyperDual:
    __slots__ = ("value", "d_r", "d_z", "d_rr", "d_rz", "d_zz")

    def __init__(self, value, d_r=0.0, d_z=0.0, d_rr=0.0, d_rz=0.0, d_zz=0.0):
        self.value = value
        self.d_r = d_r
        self.d_z = d_z
        self.d_rr = d_rr
        self.d_rz = d_rz
        self.d_zz = d_zz

    @classmethod
    def constant(cls, c) -> "HyperDual":
        return cls(c)

    @classmethod
    def variable(cls, name: str, value) -> "HyperDual":
        if name == "r":
            return cls(value, d_r=1.0)
        return cls(value, d_z=1.0)

    def __repr__(self) -> str:
        return (f"HyperDual(value={self.value!r}, d_r={self.d_r!r}, d_z={self.d_z!r}, "
                f"d_rr={self.d_rr!r}, d_rz={self.d_rz!r}, d_zz={self.d_zz!r})")

    def as_tuple(self) -> tuple:
        return (self.value, self.d_r, self.d_z, self.d_rr, self.d_rz, self.d_zz)

    # arithmetic --------------------------------------------------------------
    def __add__(self, o):
        if not isinstance(o, HyperDual):
            return HyperDual(self.value + o, self.d_r, self.d_z, self.d_rr, self.d_rz, self.d_zz)
        return HyperDual(self.value + o.value, self.d_r + o.d_r, self.d_z + o.d_z,
                         self.d_rr + o.d_rr, self.d_rz + o.d_rz, self.d_zz + o.d_zz)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.value, -self.d_r, -self.d_z, -self.d_rr, -self.d_rz, -self.d_zz)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, HyperDual):
            return HyperDual(self.value * o, self.d_r * o, self.d_z * o,
                             self.d_rr * o, self.d_rz * o, self.d_zz * o)
        a, b = self, o
        return HyperDual(
            a.value * b.value,
            a.d_r * b.value + a.value * b.d_r,
            a.d_z * b.value + a.value * b.d_z,
            a.d_rr * b.value + 2.0 * a.d_r * b.d_r + a.value * b.d_rr,
            a.d_rz * b.value + a.d_r * b.d_z + a.d_z * b.d_r + a.value * b.d_rz,
            a.d_zz * b.value + 2.0 * a.d_z * b.d_z + a.value * b.d_zz,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "HyperDual":
        v = self.value
        return self._chain(1.0 / v, -1.0 / v ** 2, 2.0 / v ** 3)

    def __truediv__(self, o):
        if not isinstance(o, HyperDual):
            return self * (1.0 / o)
        return self * o.reciprocal()

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, n: int):
        v = self.value
        if n == 0:
            return HyperDual(np.ones_like(v) if isinstance(v, np.ndarray) else 1.0)
        if n == 1:
            return self
        f0 = v ** n
        f1 = n * v ** (n - 1)
        f2 = n * (n - 1) * v ** (n - 2)
        return self._chain(f0, f1, f2)

    def _chain(self, f0, f1, f2) -> "HyperDual":
        """Compose with a scalar function given its value and derivatives at ``self.value``."""
        a = self
        return HyperDual(
            f0,
            f1 * a.d_r,
            f1 * a.d_z,
            f2 * a.d_r * a.d_r + f1 * a.d_rr,
            f2 * a.d_r * a.d_z + f1 * a.d_rz,
            f2 * a.d_z * a.d_z + f1 * a.d_zz,
        )


def _any(mask) -> bool:
    return bool(np.any(mask))


def _apply(name: str, x: HyperDual, where: str) -> HyperDual:
    v = x.value
    if name == "sin":
        s, c = np.sin(v), np.cos(v)
        return x._chain(s, c, -s)
    if name == "cos":
        s, c = np.sin(v), np.cos(v)
        return x._chain(c, -s, -c)
    if name == "tan":
        c = np.cos(v)
        if _any(c == 0.0):
            raise DomainError(where, v, "tan at a pole")
        t = np.sin(v) / c
        sec2 = 1.0 / c ** 2
        return x._chain(t, sec2, 2.0 * t * sec2)
    if name == "cot":
        s = np.sin(v)
        if _any(s == 0.0):
            raise DomainError(where, v, "cot at a pole")
        ct = np.cos(v) / s
        csc2 = 1.0 / s ** 2
        return x._chain(ct, -csc2, 2.0 * ct * csc2)
    if name == "exp":
        ev = np.exp(v)
        return x._chain(ev, ev, ev)
    if name == "ln":
        if _any(~(np.asarray(v) > 0.0)):
            raise DomainError(where, v, "logarithm of non-positive value")
        return x._chain(np.log(v), 1.0 / v, -1.0 / v ** 2)
    if name == "sqrt":
        if _any(np.asarray(v) <= 0.0):
            raise DomainError(where, v, "square root needs a positive argument for derivatives")
        sq = np.sqrt(v)
        return x._chain(sq, 0.5 / sq, -0.25 / (sq * v))
    raise ValueError(name)


def evaluate_hyperdual(e: Expr, r, z, params: Optional[Mapping[str, float]] = None) -> HyperDual:
    """Value and all partials up to second order, by forward propagation.

    Independent of :func:`differentiate`; used as a derivative oracle.
    """
    params = params or {}
    memo: dict = {}

    def go(node: Expr) -> HyperDual:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = HyperDual(float(node.value))
        elif isinstance(node, NamedConst):
            out = HyperDual(np.pi)
        elif isinstance(node, Var):
            out = HyperDual.variable(node.name, r if node.name == "r" else z)
        elif isinstance(node, Param):
            if node.name not in params:
                raise UnboundParameterError(node.name)
            out = HyperDual(float(params[node.name]))
        elif isinstance(node, Neg):
            out = -go(node.arg)
        elif isinstance(node, Add):
            out = go(node.args[0])
            for a in node.args[1:]:
                out = out + go(a)
        elif isinstance(node, Sub):
            out = go(node.left) - go(node.right)
        elif isinstance(node, Mul):
            out = go(node.args[0])
            for a in node.args[1:]:
                out = out * go(a)
        elif isinstance(node, Div):
            den = go(node.right)
            if _any(np.asarray(den.value) == 0.0):
                raise DomainError(to_text(node), den.value, "division by zero")
            out = go(node.left) / den
        elif isinstance(node, Pow):
            base = go(node.base)
            if node.exp < 0 and _any(np.asarray(base.value) == 0.0):
                raise DomainError(to_text(node), base.value, "negative power of zero")
            out = base ** node.exp
        elif isinstance(node, Func):
            out = _apply(node.name, go(node.arg), to_text(node))
        else:
            raise TypeError(f"cannot evaluate {node!r}")
        memo[node] = out
        return out

    return go(e)
