"""Adaptive Gauss-Kronrod quadrature and axis-parallel path planning.

Line integrals of exact one-forms are taken along staircase paths made of
r-sweeps and z-sweeps.  Paths are routed around singular sets by sampling a
probe along every candidate segment.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "GridSpec", "Segment", "PathPlan", "QuadratureResult", "QuadratureError", "NoPathFoundError",
    "integrate_segment", "integrate_intervals", "plan_path", "line_integral", "segment_clear",
]


class QuadratureError(ArithmeticError):
    """Adaptive subdivision hit its depth limit (integrand is near-singular)."""


class NoPathFoundError(RuntimeError):
    """No singularity-free axis-parallel route joins the two points."""


@dataclass(frozen=True)
class GridSpec:
    r_min: float
    r_max: float
    z_min: float
    z_max: float
    n_r: int = 41
    n_z: int = 41

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ValueError("grid needs 0 < r_min < r_max (the operator carries 1/r and 1/r^2 terms)")
        if not self.z_min < self.z_max:
            raise ValueError("grid needs z_min < z_max")
        if self.n_r < 2 or self.n_z < 2:
            raise ValueError("grid needs at least two points per axis")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"rmin:rmax:nr,zmin:zmax:nz"``."""
        try:
            r_part, z_part = text.split(",")
            r0, r1, nr = r_part.split(":")
            z0, z1, nz = z_part.split(":")
            return cls(float(r0), float(r1), float(z0), float(z1), int(nr), int(nz))
        except ValueError as exc:
            raise ValueError(f"bad grid {text!r}: {exc}") from None

    def to_text(self) -> str:
        return f"{self.r_min!r}:{self.r_max!r}:{self.n_r},{self.z_min!r}:{self.z_max!r}:{self.n_z}"

    def axes(self):
        return np.linspace(self.r_min, self.r_max, self.n_r), np.linspace(self.z_min, self.z_max, self.n_z)

    def mesh(self):
        """Row-major mesh: ``r`` varies along axis 0, ``z`` along axis 1."""
        rs, zs = self.axes()
        return np.meshgrid(rs, zs, indexing="ij")

    @property
    def size(self) -> int:
        return self.n_r * self.n_z

    def to_json(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "z_min": self.z_min,
                "z_max": self.z_max, "n_r": self.n_r, "n_z": self.n_z}

    @classmethod
    def from_json(cls, d: dict) -> "GridSpec":
        return cls(float(d["r_min"]), float(d["r_max"]), float(d["z_min"]), float(d["z_max"]),
                   int(d.get("n_r", 41)), int(d.get("n_z", 41)))


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    n_evaluations: int


# 7-point Gauss / 15-point Kronrod pair (QUADPACK qk15 abscissae and weights)
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])          # 15 nodes, ascending
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod abscissae (x1, x3, x5, x7=0)
for _k, _w in zip((1, 3, 5, 7), _WG):
    GAUSS_WEIGHTS[_k] = _w
    GAUSS_WEIGHTS[14 - _k] = _w

_EPS = np.finfo(float).eps
_MAX_DEPTH = 40


def _gk15(f, a: np.ndarray, b: np.ndarray):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = c[:, None] + h[:, None] * NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    k = h * (fx @ KRONROD_WEIGHTS)
    g = h * (fx @ GAUSS_WEIGHTS)
    absk = np.abs(h) * (np.abs(fx) @ KRONROD_WEIGHTS)
    return k, np.abs(k - g), absk


def _adaptive(f, a, b, accept, max_depth: int = _MAX_DEPTH):
    """Bisect batches of intervals until ``accept(width, value, err, abs)`` holds.

    Returns per-interval totals ``(value, err, n_evaluations)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    total = np.zeros(n)
    err = np.zeros(n)
    owner = np.arange(n)
    lo, hi = a.copy(), b.copy()
    nevals = 0
    depth = 0
    while lo.size:
        k, e, absk = _gk15(f, lo, hi)
        nevals += 15 * lo.size
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(e))):
            raise QuadratureError("integrand is not finite on the interval (near-singular path)")
        ok = accept(hi - lo, k, e, absk) | (np.abs(hi - lo) <= 1e-14 * np.maximum(1.0, np.abs(lo)))
        np.add.at(total, owner[ok], k[ok])
        np.add.at(err, owner[ok], e[ok])
        if np.all(ok):
            break
        depth += 1
        if depth > max_depth:
            raise QuadratureError("maximum subdivision depth exceeded (near-singular integrand)")
        lo, hi, owner = lo[~ok], hi[~ok], owner[~ok]
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        owner = np.concatenate([owner, owner])
    return total, err, nevals


def integrate_segment(f: Callable, a: float, b: float, tol: float = 1e-10) -> QuadratureResult:
    """Integrate a vectorised ``f`` over ``[a, b]``.

    Panels are bisected until each one's Kronrod-Gauss difference is below
    its share of ``tol * max(1, |value|)``, so the summed estimate honours
    that bound.  Deterministic.
    """
    if a == b:
        return QuadratureResult(0.0, 0.0, 0)
    k0, _, _ = _gk15(f, np.array([a]), np.array([b]))
    length = abs(b - a)
    budget = tol * max(1.0, abs(float(k0[0])))

    def accept(width, k, e, absk):
        floor = 50.0 * _EPS * absk
        return e <= np.maximum(budget * np.abs(width) / length, floor)

    total, err, nevals = _adaptive(f, [a], [b], accept)
    return QuadratureResult(float(total[0]), float(err[0]), nevals + 15)


def integrate_intervals(f: Callable, a, b, tol: float = 1e-12):
    """Integrate ``f`` over many intervals at once (one batched call per level).

    Each interval is accepted when its error estimate is below
    ``tol * max(width, |value|)``.  Returns ``(values, errors)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.size == 0:
        return np.zeros(0), np.zeros(0)

    def accept(width, k, e, absk):
        return e <= np.maximum(tol * np.maximum(np.abs(width), np.abs(k)), 50.0 * _EPS * absk)

    total, err, _ = _adaptive(f, a, b, accept)
    return total, err


# -- paths ---------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    start: tuple
    end: tuple

    @property
    def axis(self) -> str:
        return "r" if self.start[1] == self.end[1] else "z"

    @property
    def length(self) -> float:
        return abs(self.end[0] - self.start[0]) + abs(self.end[1] - self.start[1])

    @property
    def sign(self) -> float:
        i = 0 if self.axis == "r" else 1
        return 1.0 if self.end[i] >= self.start[i] else -1.0

    def point(self, t):
        """Points at arc-length ``t`` from the start."""
        t = np.asarray(t, dtype=float)
        if self.axis == "r":
            return self.start[0] + self.sign * t, np.full_like(t, self.start[1])
        return np.full_like(t, self.start[0]), self.start[1] + self.sign * t

    def to_json(self) -> dict:
        return {"axis": self.axis, "start": list(self.start), "end": list(self.end)}


@dataclass(frozen=True)
class PathPlan:
    segments: tuple = field(default_factory=tuple)

    @property
    def start(self):
        return self.segments[0].start if self.segments else None

    @property
    def end(self):
        return self.segments[-1].end if self.segments else None

    def to_json(self) -> list:
        return [s.to_json() for s in self.segments]


def _sample_count(length: float, spacing: float) -> int:
    return int(min(4000, max(33, math.ceil(8.0 * length / spacing) + 1)))


def segment_clear(probe, p0, p1, spacing: float) -> bool:
    """True if every sample on the segment passes ``probe``.

    ``probe(r, z)`` returns a boolean mask.  If the probe also has a
    ``sign_values(r, z)`` method, a sign change of any tracked quantity
    between consecutive samples fails the segment as well (a zero crossing
    can fall between samples).
    """
    length = abs(p1[0] - p0[0]) + abs(p1[1] - p0[1])
    if length == 0.0:
        return bool(np.all(probe(np.array([p0[0]]), np.array([p0[1]]))))
    n = _sample_count(length, spacing)
    s = np.linspace(0.0, 1.0, n)
    r = p0[0] + s * (p1[0] - p0[0])
    z = p0[1] + s * (p1[1] - p0[1])
    if not np.all(probe(r, z)):
        return False
    signs = getattr(probe, "sign_values", None)
    if signs is not None:
        v = np.atleast_2d(signs(r, z))
        sg = np.sign(v)
        if np.any(sg[:, 1:] * sg[:, :-1] <= 0):
            return False
    return True


def _l_paths(base, target):
    """Both L-shaped candidates, r-first first."""
    corner_r = (target[0], base[1])
    corner_z = (base[0], target[1])
    return [[base, corner_r, target], [base, corner_z, target]]


def _clean(points) -> PathPlan:
    pts = [tuple(map(float, p)) for p in points]
    dedup = [pts[0]]
    for p in pts[1:]:
        if p != dedup[-1]:
            dedup.append(p)
    # merge collinear runs
    merged = [dedup[0]]
    for i in range(1, len(dedup)):
        if len(merged) >= 2:
            a, b, c = merged[-2], merged[-1], dedup[i]
            if (a[0] == b[0] == c[0]) or (a[1] == b[1] == c[1]):
                # same axis: only merge if direction is preserved
                if (b[0] - a[0]) * (c[0] - b[0]) >= 0 and (b[1] - a[1]) * (c[1] - b[1]) >= 0:
                    merged[-1] = c
                    continue
        merged.append(dedup[i])
    segs = tuple(Segment(merged[i], merged[i + 1]) for i in range(len(merged) - 1))
    return PathPlan(segs)


def _default_hint(base, target) -> GridSpec:
    r_lo, r_hi = sorted((base[0], target[0]))
    z_lo, z_hi = sorted((base[1], target[1]))
    pad_r = 0.5 * (r_hi - r_lo) + 0.5
    pad_z = 0.5 * (z_hi - z_lo) + 0.5
    return GridSpec(max(r_lo - pad_r, 0.25 * r_lo), r_hi + pad_r, z_lo - pad_z, z_hi + pad_z, 41, 41)


def plan_path(base, target, singular_probe, grid_hint: Optional[GridSpec] = None) -> PathPlan:
    """Axis-parallel route from ``base`` to ``target`` avoiding the singular set.

    Tries the r-first L, then the z-first L, then a staircase through the
    nodes of ``grid_hint`` (breadth-first, neighbours visited in a fixed
    order so plans are reproducible).  Raises :class:`NoPathFoundError`.
    """
    base = (float(base[0]), float(base[1]))
    target = (float(target[0]), float(target[1]))
    hint = grid_hint or _default_hint(base, target)
    rs, zs = hint.axes()
    spacing = min(rs[1] - rs[0], zs[1] - zs[0])
    for pts in (base, target):
        if not np.all(singular_probe(np.array([pts[0]]), np.array([pts[1]]))):
            raise NoPathFoundError(f"point {pts} is not regular")
    if base == target:
        return PathPlan(())
    for pts in _l_paths(base, target):
        if all(segment_clear(singular_probe, pts[i], pts[i + 1], spacing) for i in range(2)):
            return _clean(pts)
    return _staircase(base, target, singular_probe, rs, zs, spacing)


def _staircase(base, target, probe, rs, zs, spacing) -> PathPlan:
    nr, nz = rs.size, zs.size
    R, Zm = np.meshgrid(rs, zs, indexing="ij")
    node_ok = np.asarray(probe(R.ravel(), Zm.ravel()), dtype=bool).reshape(nr, nz)

    # edges are checked lazily and memoised
    edge_cache: dict = {}

    def edge(i, j, k, l):
        key = (min((i, j), (k, l)), max((i, j), (k, l)))
        hit = edge_cache.get(key)
        if hit is None:
            hit = segment_clear(probe, (rs[i], zs[j]), (rs[k], zs[l]), spacing)
            edge_cache[key] = hit
        return hit

    def connectors(p):
        order = sorted(
            ((abs(rs[i] - p[0]) + abs(zs[j] - p[1]), i, j) for i in range(nr) for j in range(nz) if node_ok[i, j]),
        )[:16]
        out = []
        for _, i, j in order:
            node = (rs[i], zs[j])
            for pts in _l_paths(p, node):
                if all(segment_clear(probe, pts[m], pts[m + 1], spacing) for m in range(2)):
                    out.append(((i, j), pts))
                    break
        return out

    starts = connectors(base)
    ends = connectors(target)
    if not starts or not ends:
        raise NoPathFoundError(f"no singularity-free path from {base} to {target}")
    prev: dict = {}
    queue = deque()
    for (ij, _) in starts:
        if ij not in prev:
            prev[ij] = None
            queue.append(ij)
    while queue:
        i, j = queue.popleft()
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            k, l = i + di, j + dj
            if 0 <= k < nr and 0 <= l < nz and node_ok[k, l] and (k, l) not in prev and edge(i, j, k, l):
                prev[(k, l)] = (i, j)
                queue.append((k, l))
    for ij, tail in ends:
        if ij in prev:
            chain = []
            cur = ij
            while cur is not None:
                chain.append(cur)
                cur = prev[cur]
            chain.reverse()
            head = next(pts for (s, pts) in starts if s == chain[0])
            pts = list(head) + [(rs[i], zs[j]) for (i, j) in chain[1:]] + list(reversed(tail))
            return _clean(pts)
    raise NoPathFoundError(f"no singularity-free path from {base} to {target}")


def line_integral(form, plan: PathPlan, params=None, tol: float = 1e-10) -> QuadratureResult:
    """Integrate ``A dr + B dz`` along ``plan``.

    ``form`` is either a :class:`~moutard.transform.OneForm` (its symbolic
    components are compiled with ``params``) or a pair of vectorised
    callables ``(A(r, z), B(r, z))``.
    """
    if hasattr(form, "compiled"):
        comp = form.compiled(params)

        def component(axis, r, z):
            vals, _, _ = comp.vector(r, z)
            return vals[0] if axis == "r" else vals[1]
    else:
        fa, fb = form

        def component(axis, r, z):
            return (fa if axis == "r" else fb)(r, z)

    value = 0.0
    err = 0.0
    nevals = 0
    for seg in plan.segments:
        def f(t, seg=seg):
            r, z = seg.point(t)
            return seg.sign * np.asarray(component(seg.axis, r, z), dtype=float)

        res = integrate_segment(f, 0.0, seg.length, tol)
        value += res.value
        err += res.error_estimate
        nevals += res.n_evaluations
    return QuadratureResult(value, err, nevals)
