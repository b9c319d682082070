from __future__ import annotations

from fractions import Fraction

from .nodes import ONE, TWO, ZERO, Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub, Var, free_symbols
from .simplify import simplify


def _d(e: Expr, var: str, memo: dict) -> Expr:
    if var not in free_symbols(e):
        return ZERO
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Var):
        out = ONE
    elif isinstance(e, Neg):
        out = Neg(_d(e.arg, var, memo))
    elif isinstance(e, Add):
        out = Add(tuple(_d(a, var, memo) for a in e.args))
    elif isinstance(e, Sub):
        out = Sub(_d(e.left, var, memo), _d(e.right, var, memo))
    elif isinstance(e, Mul):
        terms = []
        for i, a in enumerate(e.args):
            if var not in free_symbols(a):
                continue
            rest = e.args[:i] + (_d(a, var, memo),) + e.args[i + 1:]
            terms.append(Mul(rest))
        out = terms[0] if len(terms) == 1 else Add(tuple(terms))
    elif isinstance(e, Div):
        a, b = e.left, e.right
        if var not in free_symbols(b):
            out = Div(_d(a, var, memo), b)
        elif var not in free_symbols(a):
            out = Neg(Div(Mul((a, _d(b, var, memo))), Pow(b, 2)))
        else:
            out = Div(Sub(Mul((_d(a, var, memo), b)), Mul((a, _d(b, var, memo)))), Pow(b, 2))
    elif isinstance(e, Pow):
        out = Mul((Const(Fraction(e.exp)), Pow(e.base, e.exp - 1), _d(e.base, var, memo)))
    elif isinstance(e, Func) and e.name == "ln" and isinstance(e.arg, Func) and e.arg.name == "sin":
        # d ln(sin u) = cot(u) du keeps log-derivatives of trigonometric seeds compact
        out = Mul((Func("cot", e.arg.arg), _d(e.arg.arg, var, memo)))
    elif isinstance(e, Func):
        out = Mul((_outer(e), _d(e.arg, var, memo)))
    else:
        raise TypeError(f"cannot differentiate {e!r}")
    memo[e] = out
    return out


def _outer(f: Func) -> Expr:
    """Derivative of the outer function evaluated at the argument."""
    u = f.arg
    name = f.name
    if name == "sin":
        return Func("cos", u)
    if name == "cos":
        return Neg(Func("sin", u))
    if name == "tan":
        return Div(ONE, Pow(Func("cos", u), 2))
    if name == "cot":
        return Neg(Div(ONE, Pow(Func("sin", u), 2)))
    if name == "exp":
        return f
    if name == "ln":
        return Div(ONE, u)
    if name == "sqrt":
        return Div(ONE, Mul((TWO, f)))
    raise ValueError(name)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative with respect to ``r`` or ``z``."""
    if var not in ("r", "z"):
        raise ValueError(f"can only differentiate with respect to r or z, not {var!r}")
    return simplify(_d(e, var, {}))


def d(e: Expr, *vars: str) -> Expr:
    """Repeated partial derivative, e.g. ``d(e, "r", "z")``."""
    for v in vars:
        e = differentiate(e, v)
    return e
