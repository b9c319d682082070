"""Numerical evaluation by code generation.

A list of expressions is lowered to straight-line Python (one assignment
per distinct subtree, so shared subexpressions are computed once) and
compiled twice: a scalar version on :mod:`math` that raises
:class:`DomainError` at the first violation, and a vectorised numpy version
that never raises but reports, per point, whether any violation occurred
and how close the nearest denominator came to zero.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, UnboundParameterError
from .nodes import Add, Const, Div, Expr, Func, Mul, NamedConst, Neg, Param, Pow, Sub, Var, parameters
from .printer import to_text

ParameterSet = Mapping[str, float]


# -- scalar helpers: raise on the first domain violation --------------------

def _s_div(ctx, a, b, i):
    if b == 0.0:
        raise DomainError(ctx[i], b, "division by zero")
    return a / b


def _s_ipow(ctx, a, n, i):
    if n < 0 and a == 0.0:
        raise DomainError(ctx[i], a, "negative power of zero")
    return a ** n


def _s_ln(ctx, a, i):
    if not a > 0.0:
        raise DomainError(ctx[i], a, "logarithm of non-positive value")
    return math.log(a)


def _s_sqrt(ctx, a, i):
    if a < 0.0:
        raise DomainError(ctx[i], a, "square root of negative value")
    return math.sqrt(a)


def _s_tan(ctx, a, i):
    c = math.cos(a)
    if c == 0.0:
        raise DomainError(ctx[i], a, "tan at a pole")
    return math.sin(a) / c


def _s_cot(ctx, a, i):
    s = math.sin(a)
    if s == 0.0:
        raise DomainError(ctx[i], a, "cot at a pole")
    return math.cos(a) / s


def _s_exp(ctx, a, i):
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError(ctx[i], a, "exp overflow") from None


_SCALAR_NS = {
    "_div": _s_div, "_ipow": _s_ipow, "_ln": _s_ln, "_sqrt": _s_sqrt,
    "_tan": _s_tan, "_cot": _s_cot, "_exp": _s_exp,
    "_sin": math.sin, "_cos": math.cos, "_pi": math.pi,
}


# -- vector helpers: record violations in ctx, never raise --------------------

class _VecCtx:
    __slots__ = ("bad", "ratio")

    def __init__(self, shape):
        self.bad = np.zeros(shape, dtype=bool)
        self.ratio = np.full(shape, np.inf)

    def den(self, num, den):
        self.bad |= den == 0.0
        self.ratio = np.minimum(self.ratio, np.abs(den) / np.maximum(1.0, np.abs(num)))


def _v_div(ctx, a, b, i):
    ctx.den(a, b)
    return np.true_divide(a, b)


def _v_ipow(ctx, a, n, i):
    a = np.asarray(a, dtype=float)
    if n < 0:
        ctx.den(1.0, a ** (-n))
        return 1.0 / a ** (-n)
    return a ** n


def _v_ln(ctx, a, i):
    ctx.bad |= np.logical_not(np.asarray(a) > 0.0)
    return np.log(a)


def _v_sqrt(ctx, a, i):
    ctx.bad |= np.asarray(a) < 0.0
    return np.sqrt(a)


def _v_tan(ctx, a, i):
    c = np.cos(a)
    ctx.den(1.0, c)
    return np.sin(a) / c


def _v_cot(ctx, a, i):
    s = np.sin(a)
    ctx.den(1.0, s)
    return np.cos(a) / s


def _v_exp(ctx, a, i):
    return np.exp(a)


_VECTOR_NS = {
    "_div": _v_div, "_ipow": _v_ipow, "_ln": _v_ln, "_sqrt": _v_sqrt,
    "_tan": _v_tan, "_cot": _v_cot, "_exp": _v_exp,
    "_sin": np.sin, "_cos": np.cos, "_pi": math.pi,
}


def _lower(exprs: Sequence[Expr], values: Mapping[str, float]):
    """Return (source lines, output names, node texts for error messages)."""
    names: dict = {}
    lines: list = []
    texts: list = []

    def emit(rhs: str) -> str:
        name = f"t{len(lines)}"
        lines.append(f"    {name} = {rhs}")
        return name

    def idx(node: Expr) -> int:
        texts.append(to_text(node))
        return len(texts) - 1

    def go(e: Expr) -> str:
        hit = names.get(e)
        if hit is not None:
            return hit
        if isinstance(e, Const):
            out = f"({float(e.value)!r})"
        elif isinstance(e, NamedConst):
            out = "_pi"
        elif isinstance(e, Var):
            out = e.name
        elif isinstance(e, Param):
            out = f"({float(values[e.name])!r})"
        elif isinstance(e, Neg):
            out = emit(f"-{go(e.arg)}")
        elif isinstance(e, Add):
            out = emit(" + ".join(go(a) for a in e.args))
        elif isinstance(e, Sub):
            out = emit(f"{go(e.left)} - {go(e.right)}")
        elif isinstance(e, Mul):
            out = emit(" * ".join(go(a) for a in e.args))
        elif isinstance(e, Div):
            out = emit(f"_div(ctx, {go(e.left)}, {go(e.right)}, {idx(e)})")
        elif isinstance(e, Pow):
            base = go(e.base)
            if e.exp >= 0:
                out = emit(f"{base} ** {e.exp}")
            else:
                out = emit(f"_ipow(ctx, {base}, {e.exp}, {idx(e)})")
        elif isinstance(e, Func):
            arg = go(e.arg)
            if e.name in ("sin", "cos"):
                out = emit(f"_{e.name}({arg})")
            else:
                out = emit(f"_{e.name}(ctx, {arg}, {idx(e)})")
        else:
            raise TypeError(f"cannot evaluate {e!r}")
        names[e] = out
        return out

    outs = [go(e) for e in exprs]
    return lines, outs, texts


class CompiledExprs:
    """Several expressions compiled together with bound parameter values."""

    def __init__(self, exprs: Sequence[Expr], params: Optional[ParameterSet] = None):
        params = dict(params or {})
        self.exprs = tuple(exprs)
        needed = set()
        for e in self.exprs:
            needed |= parameters(e)
        for name in sorted(needed):
            if name not in params:
                raise UnboundParameterError(name)
        self.params = {k: float(params[k]) for k in needed}
        lines, outs, texts = _lower(self.exprs, self.params)
        body = "\n".join(lines) if lines else "    pass"
        src = f"def _f(r, z, ctx):\n{body}\n    return ({', '.join(outs)}{',' if len(outs) == 1 else ''})\n"
        self.source = src
        self._texts = texts
        code = compile(src, "<moutard-expr>", "exec")
        ns_s = dict(_SCALAR_NS)
        exec(code, ns_s)
        ns_v = dict(_VECTOR_NS)
        exec(code, ns_v)
        self._scalar = ns_s["_f"]
        self._vector = ns_v["_f"]

    def scalar(self, r: float, z: float) -> tuple:
        """Evaluate at one point; raises :class:`DomainError`."""
        try:
            out = self._scalar(float(r), float(z), self._texts)
        except (OverflowError, ZeroDivisionError) as exc:
            raise DomainError(to_text(self.exprs[0]), float("nan"), str(exc)) from None
        for v, e in zip(out, self.exprs):
            if not math.isfinite(v):
                raise DomainError(to_text(e), v, "non-finite result")
        return out

    def vector(self, r, z):
        """Evaluate on arrays.

        Returns ``(values, bad, ratio)``: a list of float arrays, a boolean
        mask of points where a domain violation occurred (or a result is not
        finite), and the smallest ``|denominator| / max(1, |numerator|)``
        seen at each point.
        """
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        r, z = np.broadcast_arrays(r, z)
        ctx = _VecCtx(r.shape)
        with np.errstate(all="ignore"):
            out = self._vector(r, z, ctx)
        vals = []
        bad = ctx.bad
        for v in out:
            v = np.broadcast_to(np.asarray(v, dtype=float), r.shape)
            bad = bad | ~np.isfinite(v)
            vals.append(v)
        return vals, bad, ctx.ratio


@lru_cache(maxsize=512)
def _compile_cached(exprs: tuple, params: tuple) -> CompiledExprs:
    return CompiledExprs(exprs, dict(params))


def compile_exprs(exprs: Sequence[Expr], params: Optional[ParameterSet] = None) -> CompiledExprs:
    exprs = tuple(exprs)
    needed = set()
    for e in exprs:
        needed |= parameters(e)
    params = params or {}
    for name in sorted(needed):
        if name not in params:
            raise UnboundParameterError(name)
    key = tuple(sorted((k, float(params[k])) for k in needed))
    return _compile_cached(exprs, key)


def evaluate(e: Expr, r: float, z: float, params: Optional[ParameterSet] = None) -> float:
    """Double-precision value of ``e`` at ``(r, z)``.

    Raises :class:`UnboundParameterError` for a missing parameter and
    :class:`DomainError` (carrying the offending subexpression) instead of
    returning NaN or infinity.
    """
    return compile_exprs((e,), params).scalar(r, z)[0]


def evaluate_grid(e: Expr, r, z, params: Optional[ParameterSet] = None):
    vals, bad, ratio = compile_exprs((e,), params).vector(r, z)
    return vals[0], bad, ratio
