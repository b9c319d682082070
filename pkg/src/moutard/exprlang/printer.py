"""Infix printing that re-parses to the same tree (modulo simplify)."""
from __future__ import annotations

from .nodes import Add, Const, Div, Expr, Func, Mul, NamedConst, Neg, Param, Pow, Sub, Var

_ADD, _MUL, _NEG, _POW, _ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, Const):
        v = e.value
        if v.denominator != 1:
            return _MUL
        return _NEG if v < 0 else _ATOM
    if isinstance(e, (Add, Sub)):
        return _ADD
    if isinstance(e, (Mul, Div)):
        return _MUL
    if isinstance(e, Neg):
        return _NEG
    if isinstance(e, Pow):
        return _POW
    return _ATOM


def _const_text(v) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def _wrap(e: Expr, need: int, strict: bool) -> str:
    p = _prec(e)
    text = to_text(e)
    if p < need or (strict and p == need):
        return f"({text})"
    return text


def _negated_term(e: Expr):
    """If ``e`` prints naturally with a leading minus, return its positive part."""
    if isinstance(e, Neg):
        return e.arg
    if isinstance(e, Const) and e.value < 0:
        return Const(-e.value)
    if isinstance(e, Mul) and isinstance(e.args[0], Const) and e.args[0].value < 0:
        c = -e.args[0].value
        rest = e.args[1:]
        if c == 1:
            return rest[0] if len(rest) == 1 else Mul(rest)
        return Mul((Const(c),) + rest)
    if isinstance(e, Div):
        num = _negated_term(e.left)
        if num is not None:
            return Div(num, e.right)
    return None


def to_text(e: Expr) -> str:
    if isinstance(e, Const):
        return _const_text(e.value)
    if isinstance(e, (Var, Param, NamedConst)):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _NEG, strict=False)
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, Pow):
        base = _wrap(e.base, _POW, strict=True)
        exp = str(e.exp) if e.exp >= 0 else f"({e.exp})"
        return f"{base}^{exp}"
    if isinstance(e, Add):
        parts = [_wrap(e.args[0], _ADD, strict=False)]
        for term in e.args[1:]:
            pos = _negated_term(term)
            if pos is not None:
                parts.append(" - " + _wrap(pos, _ADD, strict=True))
            else:
                parts.append(" + " + _wrap(term, _ADD, strict=True))
        return "".join(parts)
    if isinstance(e, Sub):
        return f"{_wrap(e.left, _ADD, False)} - {_wrap(e.right, _ADD, True)}"
    if isinstance(e, Mul):
        first = e.args[0]
        out = [_wrap(first, _MUL, strict=False) if _prec(first) != _NEG else to_text(first)]
        out += [_wrap(a, _MUL, strict=True) for a in e.args[1:]]
        return "*".join(out)
    if isinstance(e, Div):
        left = e.left
        lt = to_text(left) if _prec(left) == _NEG else _wrap(left, _MUL, False)
        return f"{lt}/{_wrap(e.right, _MUL, True)}"
    raise TypeError(f"not an expression node: {e!r}")
