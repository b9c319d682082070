"""A small terminating rewrite system.

Rules: exact rational constant folding, the 0/1 identities, double negation,
sign extraction, and flattening of sums/products into a canonical order.
No factoring, cancellation or trigonometric identities.
"""
from __future__ import annotations

from fractions import Fraction
from math import isqrt

from .nodes import ONE, ZERO, Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub
from .printer import to_text

_MAX_PASSES = 50


def _is_const(e: Expr, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _sort_key(e: Expr):
    core = e
    if isinstance(core, Neg):
        core = core.arg
    if isinstance(core, Mul) and isinstance(core.args[0], Const):
        core = core.args[1] if len(core.args) == 2 else Mul(core.args[1:])
    return (to_text(core), to_text(e))


def make_neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    if isinstance(a, Mul) and isinstance(a.args[0], Const):
        c = -a.args[0].value
        rest = a.args[1:]
        if c == 1:
            return rest[0] if len(rest) == 1 else Mul(rest)
        return Mul((Const(c),) + rest)
    if isinstance(a, Div):
        num = make_neg(a.left)
        if not isinstance(num, Neg):
            return Div(num, a.right)
    return Neg(a)


def make_add(terms) -> Expr:
    flat = []
    stack = list(terms)
    stack.reverse()
    while stack:
        t = stack.pop()
        if isinstance(t, Add):
            stack.extend(reversed(t.args))
        else:
            flat.append(t)
    const = Fraction(0)
    rest = []
    for t in flat:
        if isinstance(t, Const):
            const += t.value
        else:
            rest.append(t)
    rest.sort(key=_sort_key)
    if const != 0:
        rest.append(Const(const))
    if not rest:
        return ZERO
    if len(rest) == 1:
        return rest[0]
    return Add(tuple(rest))


def make_mul(factors) -> Expr:
    flat = []
    stack = list(factors)
    stack.reverse()
    negate = False
    const = Fraction(1)
    dens = []
    while stack:
        f = stack.pop()
        if isinstance(f, Div):
            stack.append(f.left)
            dens.append(f.right)
        elif isinstance(f, Mul):
            stack.extend(reversed(f.args))
        elif isinstance(f, Neg):
            negate = not negate
            stack.append(f.arg)
        elif isinstance(f, Const):
            const *= f.value
        else:
            flat.append(f)
    if const == 0:
        return ZERO
    if negate:
        const = -const
    if dens:
        return make_div(make_mul([Const(const)] + flat), make_mul(dens))
    flat.sort(key=_sort_key)
    if not flat:
        return Const(const)
    body = flat[0] if len(flat) == 1 else Mul(tuple(flat))
    if const == 1:
        return body
    if const == -1:
        return make_neg(body)
    return Mul((Const(const),) + tuple(flat))


def make_div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1):
        return a
    if _is_const(a, 0) and not _is_const(b, 0):
        return ZERO
    if isinstance(b, Const) and b.value != 0:
        return make_mul([Const(1 / b.value), a])
    if isinstance(a, Neg):
        return make_neg(make_div(a.arg, b))
    if isinstance(b, Neg):
        return make_neg(make_div(a, b.arg))
    if isinstance(a, Div):
        return make_div(a.left, make_mul([a.right, b]))
    if isinstance(b, Div):
        return make_div(make_mul([a, b.right]), b.left)
    if isinstance(b, Mul) and isinstance(b.args[0], Const):
        rest = b.args[1] if len(b.args) == 2 else Mul(b.args[1:])
        return make_mul([Const(1 / b.args[0].value), make_div(a, rest)])
    return Div(a, b)


def make_pow(base: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const) and (base.value != 0 or n > 0):
        return Const(base.value ** n)
    if isinstance(base, Neg):
        inner = make_pow(base.arg, n)
        return inner if n % 2 == 0 else make_neg(inner)
    return Pow(base, n)


def _exact_sqrt(q: Fraction):
    if q < 0:
        return None
    p, d = q.numerator, q.denominator
    sp, sd = isqrt(p), isqrt(d)
    if sp * sp == p and sd * sd == d:
        return Fraction(sp, sd)
    return None


def make_func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        v = a.value
        if v == 0 and name in ("sin", "tan"):
            return ZERO
        if v == 0 and name in ("cos", "exp"):
            return ONE
        if v == 1 and name == "ln":
            return ZERO
        if name == "sqrt":
            root = _exact_sqrt(v)
            if root is not None:
                return Const(root)
    return Func(name, a)


def _pass(e: Expr, memo: dict) -> Expr:
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Add):
        out = make_add([_pass(a, memo) for a in e.args])
    elif isinstance(e, Mul):
        out = make_mul([_pass(a, memo) for a in e.args])
    elif isinstance(e, Sub):
        out = make_add([_pass(e.left, memo), make_neg(_pass(e.right, memo))])
    elif isinstance(e, Div):
        out = make_div(_pass(e.left, memo), _pass(e.right, memo))
    elif isinstance(e, Neg):
        out = make_neg(_pass(e.arg, memo))
    elif isinstance(e, Pow):
        out = make_pow(_pass(e.base, memo), e.exp)
    elif isinstance(e, Func):
        out = make_func(e.name, _pass(e.arg, memo))
    else:
        out = e
    memo[e] = out
    return out


def simplify(e: Expr) -> Expr:
    """Rewrite to a fixed point; the result satisfies ``simplify(s) == s``."""
    memo: dict = {}
    for _ in range(_MAX_PASSES):
        nxt = _pass(e, memo)
        if nxt == e:
            return nxt
        e = nxt
    return e
