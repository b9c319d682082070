"""The axially symmetric operator ``Y_rr + Y_r/r + Y_zz - u Y`` and its checks.

Logarithmic derivatives of seeds are always formed in rational form
(``(f'' f - f'^2) / f^2``) so seeds that change sign never hit the domain
of the logarithm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .exprlang import Expr, Func, compile_exprs, d, parse, simplify, to_text
from .exprlang.nodes import ONE, R
from .quadrature import GridSpec

DEFAULT_GRID = GridSpec(0.005, 5.0, -5.0, 5.0, 41, 41)
STANDARD_GRID = DEFAULT_GRID
SCALE_FLOOR = 1e-30

ExprLike = Union[str, Expr]


class EmptyDomainError(ValueError):
    """Every grid point was singular, so nothing was verified."""


def as_expr(e: ExprLike) -> Expr:
    return parse(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class Potential:
    expr: Expr
    region: GridSpec = DEFAULT_GRID
    singular_threshold: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "expr", as_expr(self.expr))

    def __str__(self) -> str:
        return to_text(self.expr)


@dataclass(frozen=True)
class SeedSolution:
    expr: Expr
    region: GridSpec = DEFAULT_GRID
    singular_threshold: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "expr", as_expr(self.expr))

    def __str__(self) -> str:
        return to_text(self.expr)


def as_potential(u) -> Potential:
    return u if isinstance(u, Potential) else Potential(as_expr(u.expr if isinstance(u, SeedSolution) else u))


def as_seed(y) -> SeedSolution:
    if isinstance(y, SeedSolution):
        return y
    if isinstance(y, Potential):
        return SeedSolution(y.expr)
    return SeedSolution(as_expr(y))


@dataclass
class ResidualReport:
    grid: GridSpec
    n_evaluated: int
    n_skipped_singular: int
    max_abs_residual: float
    max_rel_residual: float
    worst_point: Optional[tuple]

    def to_json(self) -> dict:
        return {
            "grid": self.grid.to_json() if self.grid is not None else None,
            "n_evaluated": self.n_evaluated,
            "n_skipped": self.n_skipped_singular,
            "max_abs": self.max_abs_residual,
            "max_rel": self.max_rel_residual,
            "worst_point": list(self.worst_point) if self.worst_point is not None else None,
        }


def operator_terms(u: Potential, y: SeedSolution) -> list:
    """The four terms ``Y_rr, Y_r/r, Y_zz, u*Y`` whose signed sum is the residual."""
    u, y = as_potential(u), as_seed(y)
    yr = d(y.expr, "r")
    return [
        d(yr, "r"),
        simplify(yr / R),
        d(y.expr, "z", "z"),
        simplify(u.expr * y.expr),
    ]


def apply_operator(u: Potential, y: SeedSolution) -> Expr:
    """Symbolic ``Y_rr + Y_r/r + Y_zz - u*Y``."""
    t = operator_terms(u, y)
    return simplify(t[0] + t[1] + t[2] - t[3])


def _mask_and_scale(comp, rr, zz, threshold, n_terms, exclude_count, exclude_eps):
    vals, bad, ratio = comp.vector(rr, zz)
    skip = bad | (ratio < threshold)
    for k in range(exclude_count):
        skip |= np.abs(vals[n_terms + k]) < exclude_eps[k]
    return vals, skip


def _report(grid, rr, zz, residual, scale, skip) -> ResidualReport:
    total = rr.size
    ok = ~skip
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise EmptyDomainError("empty verification domain: every grid point is singular")
    res = np.abs(residual[ok])
    rel = res / scale[ok]
    i = int(np.argmax(rel))
    pts = np.stack([rr[ok], zz[ok]], axis=-1)
    return ResidualReport(
        grid=grid,
        n_evaluated=n_ok,
        n_skipped_singular=total - n_ok,
        max_abs_residual=float(res.max()),
        max_rel_residual=float(rel[i]),
        worst_point=(float(pts[i, 0]), float(pts[i, 1])),
    )


def residual_report(u, y, grid: Optional[GridSpec] = None, params: Optional[Mapping[str, float]] = None,
                    exclude: Sequence = (), threshold: Optional[float] = None) -> ResidualReport:
    """Check on a grid that ``y`` solves the equation with potential ``u``.

    ``exclude`` is a list of ``(expression, eps)`` pairs; points where
    ``|expression| < eps`` are skipped in addition to points where
    evaluation fails or a denominator falls below ``threshold`` relative to
    its numerator.  The relative residual at each point divides by the
    largest of the operator's four term magnitudes.
    """
    if hasattr(y, "jet"):
        from .transform import field_residual_report

        return field_residual_report(u, y, grid, exclude=exclude)
    u, y = as_potential(u), as_seed(y)
    grid = grid or y.region
    threshold = y.singular_threshold if threshold is None else threshold
    terms = operator_terms(u, y)
    ex_exprs = [as_expr(e) for e, _ in exclude]
    ex_eps = [float(eps) for _, eps in exclude]
    comp = compile_exprs(terms + ex_exprs, params)
    rr, zz = grid.mesh()
    vals, skip = _mask_and_scale(comp, rr, zz, threshold, 4, len(ex_exprs), ex_eps)
    t0, t1, t2, t3 = vals[:4]
    with np.errstate(all="ignore"):
        residual = t0 + t1 + t2 - t3
        scale = np.maximum.reduce([np.abs(t0), np.abs(t1), np.abs(t2), np.abs(t3), np.full(rr.shape, SCALE_FLOOR)])
    skip |= ~np.isfinite(residual)
    return _report(grid, rr, zz, residual, scale, skip)


def potential_from_h(h: ExprLike) -> Potential:
    """``u = -h_rr + h_r^2 + h_r/r + 1/r^2 - h_zz + h_z^2``."""
    h = as_expr(h)
    hr = d(h, "r")
    hz = d(h, "z")
    expr = -d(hr, "r") + hr ** 2 + hr / R + ONE / R ** 2 - d(hz, "z") + hz ** 2
    return Potential(simplify(expr))


def h_from_seed(y_h) -> Expr:
    """``h = -ln(r * Y_h)``, the inverse of ``Y_h = exp(-h) / r``."""
    y_h = as_seed(y_h)
    return simplify(-Func("ln", R * y_h.expr))


def wq_consistency(y, y_tilde, y_h, grid: Optional[GridSpec] = None,
                   params: Optional[Mapping[str, float]] = None, threshold: float = 1e-8) -> ResidualReport:
    """Residuals of the first-order pair for ``W = r Y Y_h`` and ``Q = r Y_h Y~``.

    ``W_r + 2 h_r W + W/r - Q_z`` and ``W_z + 2 h_z W + Q_r`` with
    ``h = -ln(r Y_h)``; the logarithmic derivatives are rational, so only
    ``Y_h = 0`` is singular.  The worse of the two relative residuals is
    reported.
    """
    y, y_tilde, y_h = as_seed(y).expr, as_seed(y_tilde).expr, as_seed(y_h).expr
    grid = grid or DEFAULT_GRID
    w = simplify(R * y * y_h)
    q = simplify(R * y_h * y_tilde)
    h_r = simplify(-(ONE / R) - d(y_h, "r") / y_h)
    h_z = simplify(-d(y_h, "z") / y_h)
    first = [d(w, "r"), simplify(2 * h_r * w), simplify(w / R), d(q, "z")]
    second = [d(w, "z"), simplify(2 * h_z * w), d(q, "r")]
    comp = compile_exprs(first + second, params)
    rr, zz = grid.mesh()
    vals, bad, ratio = comp.vector(rr, zz)
    skip = bad | (ratio < threshold)
    a0, a1, a2, a3, b0, b1, b2 = vals
    with np.errstate(all="ignore"):
        res1 = a0 + a1 + a2 - a3
        res2 = b0 + b1 + b2
        floor = np.full(rr.shape, SCALE_FLOOR)
        s1 = np.maximum.reduce([np.abs(a0), np.abs(a1), np.abs(a2), np.abs(a3), floor])
        s2 = np.maximum.reduce([np.abs(b0), np.abs(b1), np.abs(b2), floor])
        rel1 = np.abs(res1) / s1
        rel2 = np.abs(res2) / s2
    use_first = rel1 >= rel2
    residual = np.where(use_first, res1, res2)
    scale = np.where(use_first, s1, s2)
    skip |= ~np.isfinite(residual)
    return _report(grid, rr, zz, residual, scale, skip)
