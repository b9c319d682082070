"""The generalized Moutard transformation.

Given a potential ``u`` and a seed ``Y_h`` solving the axially symmetric
equation with ``u``, the new potential is

    u~ = u - 2 d_rr ln Y_h + 1/r^2 - 2 d_zz ln Y_h

and any other solution ``Y`` of the same equation yields a solution ``Y~``
of the new one through ``P = r Y_h Y~``, whose differential

    dP = -r (Y_z Y_h - Y Y_h,z) dr + r (Y_r Y_h - Y Y_h,r) dz

is exact.  ``P`` is recovered by line integration from a base point, so a
transformed solution is nonlocal: it is evaluated numerically and is
defined on the connected component of the base point.
"""
from __future__ import annotations

import threading
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .exprlang import Expr, HyperDual, compile_exprs, d, parameters, simplify, to_text
from .exprlang.nodes import ONE, R
from .quadrature import GridSpec, NoPathFoundError, PathPlan, integrate_intervals, plan_path
from .schrodinger import (
    DEFAULT_GRID, SCALE_FLOOR, EmptyDomainError, Potential, ResidualReport, SeedSolution, _report,
    as_expr, as_potential, as_seed, residual_report,
)

DEFAULT_TOL = 1e-7
DEFAULT_QUAD_TOL = 1e-10
DEFAULT_MARGIN = 1e-6

# The transformation corresponds to the special choice h~ = -h - ln r of the
# nonlocal Darboux transformation (s = h~ - h = -2h - ln r).
H_TILDE_NOTE = "h~ = -h - ln(r); s = -2*h - ln(r)"


class SeedNotSolutionError(ValueError):
    def __init__(self, message: str, report: Optional[ResidualReport] = None):
        super().__init__(message)
        self.report = report


class DegenerateSeedError(ValueError):
    pass


class IncoherentSeedsError(ValueError):
    """The two seeds do not solve the same equation (the one-form is not closed)."""


class ChainError(RuntimeError):
    def __init__(self, stage: int, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _bound(exprs, params) -> bool:
    need = set()
    for e in exprs:
        need |= parameters(e)
    return need <= set(params or {})


def verify_seed(u, y, params=None, grid: Optional[GridSpec] = None, tol: float = DEFAULT_TOL) -> ResidualReport:
    """Residual check; raises :class:`SeedNotSolutionError` above ``tol``."""
    u, y = as_potential(u), as_seed(y)
    grid = grid or y.region
    rr, zz = grid.mesh()
    vals, bad, _ = compile_exprs((y.expr,), params).vector(rr, zz)
    finite = vals[0][~bad]
    if finite.size and np.all(finite == 0.0):
        raise DegenerateSeedError(f"seed {to_text(y.expr)} vanishes identically on the grid")
    report = residual_report(u, y, grid, params)
    if not report.max_rel_residual < tol:
        raise SeedNotSolutionError(
            f"seed is not a solution: max relative residual {report.max_rel_residual:.3e} "
            f"at {report.worst_point} exceeds {tol:g}", report)
    return report


def log_second_derivatives(y_h: Expr):
    """``(d_rr ln|f|, d_zz ln|f|)`` in rational form ``(f'' f - f'^2) / f^2``."""
    fr, fz = d(y_h, "r"), d(y_h, "z")
    frr, fzz = d(fr, "r"), d(fz, "z")
    lrr = simplify((frr * y_h - fr ** 2) / y_h ** 2)
    lzz = simplify((fzz * y_h - fz ** 2) / y_h ** 2)
    return lrr, lzz


def transform_potential(u, y_h, params=None, grid: Optional[GridSpec] = None, tol: float = DEFAULT_TOL,
                        verify: bool = True) -> Potential:
    """New potential ``u - 2 d_rr ln Y_h - 2 d_zz ln Y_h + 1/r^2``.

    The seed is checked against ``u`` first (needs every parameter bound in
    ``params``); pass ``verify=False`` to skip that for symbolic work.
    """
    u, y_h = as_potential(u), as_seed(y_h)
    if verify:
        verify_seed(u, y_h, params, grid, tol)
    lrr, lzz = log_second_derivatives(y_h.expr)
    expr = simplify(u.expr - 2 * lrr - 2 * lzz + ONE / R ** 2)
    return Potential(expr, region=u.region, singular_threshold=u.singular_threshold)


def transform_potential_from_h(u, h) -> Potential:
    """``u + 2 h_rr + 2 h_zz - 1/r^2`` for ``Y_h = exp(-h) / r``."""
    u = as_potential(u)
    h = as_expr(h)
    expr = simplify(u.expr + 2 * d(h, "r", "r") + 2 * d(h, "z", "z") - ONE / R ** 2)
    return Potential(expr, region=u.region, singular_threshold=u.singular_threshold)


def trivial_partner(y_h) -> SeedSolution:
    """``1 / (r Y_h)``: solves the transformed equation for any seed."""
    y_h = as_seed(y_h)
    return SeedSolution(simplify(ONE / (R * y_h.expr)), region=y_h.region)


@dataclass(frozen=True)
class OneForm:
    """``dP = a dr + b dz`` for ``P = r Y_h Y~``."""

    a: Expr
    b: Expr
    y: Optional[SeedSolution] = None
    y_h: Optional[SeedSolution] = None

    def compiled(self, params=None):
        return compile_exprs((self.a, self.b), params)

    def closedness_report(self, grid: Optional[GridSpec] = None, params=None,
                          threshold: float = 1e-8) -> ResidualReport:
        """``d_z a - d_r b`` relative to ``max(|a|, |b|, |d_z a|, |d_r b|)`` on a grid."""
        grid = grid or DEFAULT_GRID
        comp = compile_exprs((d(self.a, "z"), d(self.b, "r"), self.a, self.b), params)
        rr, zz = grid.mesh()
        (az, br, a, b), bad, ratio = comp.vector(rr, zz)
        with np.errstate(all="ignore"):
            res = az - br
            scale = np.maximum.reduce([np.abs(a), np.abs(b), np.abs(az), np.abs(br), np.full(rr.shape, SCALE_FLOOR)])
        skip = bad | (ratio < threshold) | ~np.isfinite(res)
        return _report(grid, rr, zz, res, scale, skip)


def make_oneform(y, y_h, params=None, grid: Optional[GridSpec] = None, check: bool = True,
                 tol: float = 1e-8) -> OneForm:
    """Components ``a = -r (Y_z Y_h - Y Y_h,z)`` and ``b = r (Y_r Y_h - Y Y_h,r)``.

    When every parameter is bound, closedness is checked on ``grid`` and a
    non-closed form raises :class:`IncoherentSeedsError`.
    """
    y, y_h = as_seed(y), as_seed(y_h)
    Y, G = y.expr, y_h.expr
    a = simplify(-(R * (d(Y, "z") * G - Y * d(G, "z"))))
    b = simplify(R * (d(Y, "r") * G - Y * d(G, "r")))
    form = OneForm(a, b, y, y_h)
    if check and _bound((a, b), params):
        rep = form.closedness_report(grid or y_h.region, params)
        if not rep.max_rel_residual < tol:
            raise IncoherentSeedsError(
                f"one-form is not closed (relative defect {rep.max_rel_residual:.3e} at {rep.worst_point}); "
                "the seeds do not solve the same equation")
    return form


class _ClosedJet:
    """Compiled value and partial derivatives up to second order of a closed form."""

    def __init__(self, expr: Expr, params):
        er, ez = d(expr, "r"), d(expr, "z")
        self.expr = expr
        self.comp = compile_exprs((expr, er, ez, d(er, "r"), d(er, "z"), d(ez, "z")), params)

    def jet(self, r, z):
        vals, bad, ratio = self.comp.vector(r, z)
        return HyperDual(*vals), bad, ratio


def _form_parts(y: HyperDual, g: HyperDual, r):
    """``a, b, a_r, a_z, b_z`` from jets of ``Y`` and ``Y_h``."""
    a = -r * (y.d_z * g.value - y.value * g.d_z)
    b = r * (y.d_r * g.value - y.value * g.d_r)
    a_r = -(y.d_z * g.value - y.value * g.d_z) - r * (y.d_rz * g.value + y.d_z * g.d_r - y.d_r * g.d_z - y.value * g.d_rz)
    a_z = -r * (y.d_zz * g.value - y.value * g.d_zz)
    b_z = r * (y.d_rz * g.value + y.d_r * g.d_z - y.d_z * g.d_r - y.value * g.d_rz)
    return a, b, a_r, a_z, b_z


class _FieldProbe:
    """Regularity of the integrands of every level of a (possibly nested) field.

    A level's own seed may vanish along the path: only its denominators
    matter there, since ``P`` is integrated, not ``Y~``.  Seeds of inner
    levels divide the integrand of the next level, so they must stay away
    from zero and keep their sign along a segment.
    """

    def __init__(self, fld: "TransformedSolutionField", margin: float):
        self.levels = fld.chain()
        self.margin = margin

    def _eval(self, r, z):
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        ok = r > 0
        signs = []
        last = len(self.levels) - 1
        for i, f in enumerate(self.levels):
            g, bad, ratio = f._yh.jet(r, z)
            ok &= ~bad & (ratio >= self.margin)
            if i < last:
                ok &= np.abs(g.value) >= self.margin
                signs.append(g.value)
            if f._closed:
                _, bad, ratio = f._y_closed.jet(r, z)
                ok &= ~bad & (ratio >= self.margin)
                _, bad, ratio = f._form.vector(r, z)
                ok &= ~bad & (ratio >= self.margin)
        return ok, (np.array(signs) if signs else np.empty((0, r.size)))

    def __call__(self, r, z):
        return self._eval(r, z)[0]

    def sign_values(self, r, z):
        return self._eval(r, z)[1]


class _Accumulator:
    """``P`` of one field along one segment, from knots already integrated."""

    def __init__(self, fld: "TransformedSolutionField", seg, p0: float, inner: Optional["_Accumulator"], tol: float):
        self.f = fld
        self.seg = seg
        self.inner = inner
        self.tol = tol
        self.ts = [0.0]
        self.ps = [float(p0)]

    def integrand(self, t):
        r, z = self.seg.point(t)
        pmap = self.inner.pmap(t) if self.inner is not None else {}
        return self.seg.sign * self.f._component(self.seg.axis, r, z, pmap)

    def values(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        order = np.argsort(t, kind="stable")
        ts = t[order]
        starts = np.empty_like(ts)
        from_prev = np.zeros(ts.size, dtype=bool)
        knot_val = np.empty_like(ts)
        for i, ti in enumerate(ts):
            j = bisect_right(self.ts, ti) - 1
            kt = self.ts[max(j, 0)]
            if i > 0 and ts[i - 1] >= kt:
                starts[i] = ts[i - 1]
                from_prev[i] = True
            else:
                starts[i] = kt
                knot_val[i] = self.ps[max(j, 0)]
        incr, _ = integrate_intervals(self.integrand, starts, ts, self.tol)
        out = np.empty_like(ts)
        for i in range(ts.size):
            out[i] = (out[i - 1] if from_prev[i] else knot_val[i]) + incr[i]
        for ti, pi in zip(ts, out):
            j = bisect_right(self.ts, ti)
            if self.ts[j - 1] != ti:
                self.ts.insert(j, float(ti))
                self.ps.insert(j, float(pi))
        res = np.empty_like(out)
        res[order] = out
        return res

    def pmap(self, t) -> dict:
        out = self.inner.pmap(t) if self.inner is not None else {}
        out[self.f] = self.values(t)
        return out


class TransformedSolutionField:
    """Numerically evaluable transformed solution ``Y~ = P / (r Y_h)``.

    ``source`` is the solution being transformed: a closed-form
    :class:`SeedSolution` or another field (a solution carried through an
    earlier transformation, which must share the base point).  ``P`` is
    ``additive_constant`` at the base point and ``scale`` times the line
    integral of the one-form elsewhere.
    """

    def __init__(self, y, y_h, params: Optional[Mapping[str, float]] = None, basepoint=(1.0, 0.0),
                 additive_constant: float = 0.0, scale: float = 1.0, tol: float = DEFAULT_QUAD_TOL,
                 margin: float = DEFAULT_MARGIN, grid_hint: Optional[GridSpec] = None):
        self.params = dict(params or {})
        self.y_h = as_seed(y_h)
        self.basepoint = (float(basepoint[0]), float(basepoint[1]))
        self.additive_constant = float(additive_constant)
        self.scale = float(scale)
        self.tol = tol
        self.margin = margin
        self.grid_hint = grid_hint
        self._closed = not isinstance(y, TransformedSolutionField)
        self.source = as_seed(y) if self._closed else y
        if not self._closed and self.source.basepoint != self.basepoint:
            raise ValueError("a carried field must share the base point of the field it transports")
        self._yh = _ClosedJet(self.y_h.expr, self.params)
        if self._closed:
            self.oneform = make_oneform(self.source, self.y_h, check=False)
            a, b = self.oneform.a, self.oneform.b
            self._form = compile_exprs((a, b, d(a, "r"), d(a, "z"), d(b, "z")), self.params)
            self._y_closed = _ClosedJet(self.source.expr, self.params)
        else:
            self.oneform = None
        self._lock = threading.Lock()
        self._cache: dict = {}
        self.probe = _FieldProbe(self, margin)
        if not bool(self.probe(np.array([self.basepoint[0]]), np.array([self.basepoint[1]]))[0]):
            raise ValueError(f"base point {self.basepoint} is not regular")

    def __repr__(self) -> str:
        src = to_text(self.source.expr) if self._closed else repr(self.source)
        return f"TransformedSolutionField(y={src}, y_h={to_text(self.y_h.expr)}, base={self.basepoint})"

    # structure -----------------------------------------------------------------
    def chain(self) -> list:
        """Fields from the innermost transported one out to ``self``."""
        out = [] if self._closed else self.source.chain()
        return out + [self]

    def regauged(self, alpha: float, beta: float) -> "TransformedSolutionField":
        """The field ``alpha * Y~ + beta / (r Y_h)``."""
        new = TransformedSolutionField.__new__(TransformedSolutionField)
        new.__dict__.update(self.__dict__)
        new.additive_constant = alpha * self.additive_constant + beta
        new.scale = alpha * self.scale
        new._lock = threading.Lock()
        new._cache = {}
        with self._lock:
            for key, state in self._cache.items():
                st = dict(state)
                st[new] = alpha * st.pop(self) + beta
                new._cache[key] = st
        new.probe = _FieldProbe(new, self.margin)
        return new

    # local algebra ---------------------------------------------------------------
    def _parts(self, r, z, pmap):
        if self._closed:
            vals, _, _ = self._form.vector(r, z)
            return vals
        yj = self.source._jet_from(r, z, pmap)
        g, _, _ = self._yh.jet(r, z)
        return _form_parts(yj, g, r)

    def _component(self, axis: str, r, z, pmap) -> np.ndarray:
        if self._closed:
            vals, _, _ = self._form.vector(r, z)
            comp = vals[0] if axis == "r" else vals[1]
        else:
            yj = self.source._jet_from(r, z, pmap)
            g, _, _ = self._yh.jet(r, z)
            if axis == "r":
                comp = -r * (yj.d_z * g.value - yj.value * g.d_z)
            else:
                comp = r * (yj.d_r * g.value - yj.value * g.d_r)
        return self.scale * np.asarray(comp, dtype=float)

    def _jet_from(self, r, z, pmap) -> HyperDual:
        a, b, a_r, a_z, b_z = self._parts(r, z, pmap)
        s = self.scale
        p = HyperDual(pmap[self], s * a, s * b, s * a_r, s * a_z, s * b_z)
        g, _, _ = self._yh.jet(r, z)
        rj = HyperDual(np.asarray(r, dtype=float), 1.0)
        return p / (rj * g)

    # nonlocal part -------------------------------------------------------------------
    def plan_to(self, target) -> PathPlan:
        return plan_path(self.basepoint, target, self.probe, self.grid_hint)

    def states_along(self, plan: PathPlan) -> dict:
        """``P`` of every field in the chain at the end of ``plan``."""
        chain = self.chain()
        state = {f: f.additive_constant for f in chain}
        for seg in plan.segments:
            inner = None
            accs = []
            for f in chain:
                inner = _Accumulator(f, seg, state[f], inner, f.tol)
                accs.append(inner)
            end = accs[-1].pmap(np.array([seg.length]))
            state = {f: float(v[0]) for f, v in end.items()}
        return state

    def p_state(self, target) -> dict:
        key = (float(target[0]), float(target[1]))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        state = self.states_along(self.plan_to(key))
        with self._lock:
            self._cache[key] = state
        return state

    def potential_value(self, target) -> float:
        """``P`` at ``target``."""
        return self.p_state(target)[self]

    def value(self, r: float, z: float) -> float:
        p = self.potential_value((r, z))
        g, bad, _ = self._yh.jet(np.array([r], dtype=float), np.array([z], dtype=float))
        gv = float(g.value[0])
        if bad[0] or gv == 0.0:
            raise ZeroDivisionError(f"seed Y_h vanishes or is singular at {(r, z)}")
        return p / (r * gv)

    def jet(self, r: float, z: float) -> HyperDual:
        """Value and partials up to second order of ``Y~`` at a point."""
        state = self.p_state((r, z))
        pmap = {f: np.array([v]) for f, v in state.items()}
        hd = self._jet_from(np.array([r], dtype=float), np.array([z], dtype=float), pmap)
        return HyperDual(*(float(np.asarray(c).reshape(-1)[0]) for c in hd.as_tuple()))


def transform_solution(fld: TransformedSolutionField, at) -> float:
    """``Y~`` at ``at``: line integral of the one-form from the base point."""
    return fld.value(float(at[0]), float(at[1]))


def field_residual_report(u, fld: TransformedSolutionField, grid: Optional[GridSpec] = None,
                          exclude: Sequence = ()) -> ResidualReport:
    """Residual of a transported solution, from the line-integrated ``P`` and exact local derivatives.

    Points that are singular or not reachable from the base point count as
    skipped.
    """
    u = as_potential(u)
    grid = grid or GridSpec(fld.basepoint[0] * 0.8, fld.basepoint[0] * 1.2,
                            fld.basepoint[1] - 0.2, fld.basepoint[1] + 0.2, 3, 3)
    rr, zz = grid.mesh()
    ucomp = compile_exprs((u.expr,) + tuple(as_expr(e) for e, _ in exclude), fld.params)
    uvals, ubad, _ = ucomp.vector(rr, zz)
    res = np.zeros(rr.shape)
    scale = np.ones(rr.shape)
    skip = ubad.copy()
    for k, (_, eps) in enumerate(exclude):
        skip |= np.abs(uvals[1 + k]) < eps
    for idx in np.ndindex(rr.shape):
        if skip[idx]:
            continue
        r, z = float(rr[idx]), float(zz[idx])
        try:
            j = fld.jet(r, z)
        except (NoPathFoundError, ZeroDivisionError):
            skip[idx] = True
            continue
        terms = (j.d_rr, j.d_r / r, j.d_zz, uvals[0][idx] * j.value)
        res[idx] = terms[0] + terms[1] + terms[2] - terms[3]
        scale[idx] = max(max(abs(t) for t in terms), SCALE_FLOOR)
        if not np.isfinite(res[idx]):
            skip[idx] = True
    return _report(grid, rr, zz, res, scale, skip)


def gauge_fit(fld: TransformedSolutionField, target, fit_points: Sequence, params=None):
    """Fit ``alpha, beta`` so that ``alpha * Y~ + beta / (r Y_h)`` matches ``target`` at two points.

    Returns ``(alpha, beta, regauged_field)``.
    """
    target = as_seed(target)
    params = fld.params if params is None else params
    comp = compile_exprs((target.expr, fld.y_h.expr), params)
    rows, rhs = [], []
    for (r, z) in fit_points[:2]:
        t, g = comp.scalar(r, z)
        rows.append([fld.value(r, z), 1.0 / (r * g)])
        rhs.append(t)
    alpha, beta = np.linalg.solve(np.array(rows), np.array(rhs))
    return float(alpha), float(beta), fld.regauged(float(alpha), float(beta))


def compare_field(fld: TransformedSolutionField, target, points: Sequence, params=None):
    """Largest pointwise relative deviation ``|Y~ - T| / |T|`` over reachable points.

    Returns ``(max_rel, n_compared)``.
    """
    target = as_seed(target)
    params = fld.params if params is None else params
    comp = compile_exprs((target.expr,), params)
    worst = 0.0
    n = 0
    for (r, z) in points:
        try:
            v = fld.value(r, z)
        except (NoPathFoundError, ZeroDivisionError):
            continue
        t = comp.scalar(r, z)[0]
        worst = max(worst, abs(v - t) / max(abs(t), SCALE_FLOOR))
        n += 1
    return worst, n


def choose_basepoint(exprs: Sequence, grid: GridSpec, params=None, margin: float = 1e-3):
    """Grid node farthest from every zero and singularity of ``exprs``.

    A zero or pole curve may pass between nodes, so both ends of any grid
    edge along which an expression changes sign are treated as singular.
    The grid border counts as an obstacle too: nothing is known outside it.
    """
    from scipy.ndimage import distance_transform_edt

    comp = compile_exprs(tuple(as_expr(e) for e in exprs), params)
    rr, zz = grid.mesh()
    vals, bad, ratio = comp.vector(rr, zz)
    ok = ~bad & (ratio >= margin)
    for v in vals:
        ok &= np.abs(v) >= margin
        sg = np.sign(v)
        flip_r = sg[1:, :] * sg[:-1, :] < 0
        flip_z = sg[:, 1:] * sg[:, :-1] < 0
        ok[1:, :] &= ~flip_r
        ok[:-1, :] &= ~flip_r
        ok[:, 1:] &= ~flip_z
        ok[:, :-1] &= ~flip_z
    if not ok.any():
        raise EmptyDomainError("no regular grid node to use as a base point")
    padded = np.pad(ok, 1, constant_values=False)
    rs, zs = grid.axes()
    dist = distance_transform_edt(padded, sampling=(rs[1] - rs[0], zs[1] - zs[0]))[1:-1, 1:-1]
    i = int(np.argmax(np.where(ok, dist, -1.0)))
    return float(rr.flat[i]), float(zz.flat[i])


def involution_check(u, y_h, grid: Optional[GridSpec] = None, params=None,
                     tol: float = DEFAULT_TOL) -> ResidualReport:
    """Transform with ``y_h``, then with its trivial partner, and compare with ``u``.

    The deviation at each point is taken relative to the largest of
    ``|u|``, ``|u~|`` and ``1/r^2``.
    """
    u, y_h = as_potential(u), as_seed(y_h)
    grid = grid or y_h.region
    ut = transform_potential(u, y_h, params, grid, tol)
    back = transform_potential(ut, trivial_partner(y_h), params, grid, tol)
    comp = compile_exprs((u.expr, ut.expr, back.expr), params)
    rr, zz = grid.mesh()
    (a, b, c), bad, ratio = comp.vector(rr, zz)
    with np.errstate(all="ignore"):
        res = c - a
        scale = np.maximum.reduce([np.abs(a), np.abs(b), 1.0 / rr ** 2])
    skip = bad | (ratio < u.singular_threshold) | ~np.isfinite(res)
    return _report(grid, rr, zz, res, scale, skip)


@dataclass
class TransformStep:
    u: Potential
    y_h: SeedSolution
    params: dict
    verified: ResidualReport
    u_tilde: Potential
    h_tilde_note: str = H_TILDE_NOTE
    carried: list = field(default_factory=list)
    carried_reports: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "u": to_text(self.u.expr),
            "y_h": to_text(self.y_h.expr),
            "u_tilde": to_text(self.u_tilde.expr),
            "verification": self.verified.to_json(),
            "params": dict(self.params),
            "carried": [rep.to_json() for rep in self.carried_reports],
        }


def make_step(u, y_h, params=None, grid: Optional[GridSpec] = None, tol: float = DEFAULT_TOL) -> TransformStep:
    u, y_h = as_potential(u), as_seed(y_h)
    report = verify_seed(u, y_h, params, grid, tol)
    ut = transform_potential(u, y_h, params, grid, tol, verify=False)
    return TransformStep(u, y_h, dict(params or {}), report, ut)


def chain(u0, seeds: Sequence, carried: Sequence = (), params=None, grid: Optional[GridSpec] = None,
          tol: float = DEFAULT_TOL, basepoint=(1.0, 0.0), quad_tol: float = DEFAULT_QUAD_TOL,
          check_grid: Optional[GridSpec] = None) -> list:
    """Apply the transformation once per seed, transporting ``carried`` solutions along.

    Each seed must be a closed form solving the current potential; carried
    solutions start as closed forms solving ``u0`` and become nested
    fields sharing ``basepoint``.  They are re-verified at every stage on
    ``check_grid`` (a 3x3 patch around the base point by default).
    Failures raise :class:`ChainError` carrying the stage index.
    """
    u = as_potential(u0)
    current = []
    for c in carried:
        c = as_seed(c)
        try:
            verify_seed(u, c, params, grid, tol)
        except (SeedNotSolutionError, DegenerateSeedError) as exc:
            raise ChainError(0, exc) from exc
        current.append(c)
    steps = []
    for i, seed in enumerate(seeds):
        try:
            step = make_step(u, seed, params, grid, tol)
            moved = [TransformedSolutionField(c, step.y_h, params, basepoint, tol=quad_tol) for c in current]
            reports = []
            for fld in moved:
                rep = field_residual_report(step.u_tilde, fld, check_grid)
                if not rep.max_rel_residual < tol:
                    raise SeedNotSolutionError(
                        f"carried solution fails at stage {i}: residual {rep.max_rel_residual:.3e}", rep)
                reports.append(rep)
        except (SeedNotSolutionError, DegenerateSeedError, NoPathFoundError, EmptyDomainError, ValueError) as exc:
            raise ChainError(i, exc) from exc
        step.carried = moved
        step.carried_reports = reports
        steps.append(step)
        u = step.u_tilde
        current = moved
    return steps
