"""Worked examples as regression fixtures.

Expected potentials and solutions are stored as text exactly as printed in
the source material (transcribed into the expression language), never
re-derived by this package, so they act as an independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exprlang import compile_exprs, parse
from .quadrature import GridSpec, NoPathFoundError
from .schrodinger import EmptyDomainError, residual_report
from .transform import (
    SeedNotSolutionError, TransformedSolutionField, compare_field, gauge_fit, transform_potential,
    trivial_partner,
)

EX1_REGION = GridSpec(0.1, 5.0, -5.0, 5.0, 50, 50)
EX2_REGION = GridSpec(0.05, 10.0, -3.0, 3.0, 60, 60)
EX3_REGION = GridSpec(0.05, 5.0, 0.0, 10.0, 60, 60)

# transcribed closed forms
U1 = "(4*z^4 + 13*r^4 + 20*r^2*z^2)/((r^2 - 2*z^2)^2*r^2)"
Y1 = "(4*r^2*z^2 + r^4 + C1)/(r*(r^2 - 2*z^2))"
U1_SECOND = "(-8*r^2*((r^2 - 5*z^2)^2 - 33*z^4) - 8*C1*(5*r^2 + 2*z^2))/(4*r^2*z^2 + r^4 + C1)^2"
YS = "1/sqrt(r^2 + z^2)"
YS_FIRST = "r*z/((r^2 - 2*z^2)*sqrt(r^2 + z^2))"
YS_SECOND = "(3*r^4 - C1)/(sqrt(r^2 + z^2)*(4*r^2*z^2 + r^4 + C1))"
U2 = "-k^2 + 1/r^2 + 2*k^2/sin(k*z)^2"
Y2 = "(r^2 + C2)/(r*sin(k*z))"
U2_SECOND = "-k^2 + 4/(r^2 + C2) - 8*C2/(r^2 + C2)^2"
Y2_SECOND = "sin(k*z)/(r^2 + C2)"
RHO3 = "sqrt(r^2 + (z + z0)^2)"
U3 = f"-k^2 + 1/r^2 + 2*k^2/sin(k*{RHO3})^2 - 2*k*cot(k*{RHO3})/{RHO3}"
Y3 = f"(z + z0 + C3*{RHO3})/(sin(k*{RHO3})*r)"
U3_SECOND = f"-k^2 + 2/(z + z0 + C3*{RHO3})^2 + 2*C3*(z + z0)/({RHO3}*(z + z0 + C3*{RHO3})^2)"
Y3_SECOND = f"sin(k*{RHO3})/(z + z0 + C3*{RHO3})"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    u: str
    y_h: str
    expected_potential: str
    y: Optional[str] = None
    expected_solution: Optional[str] = None
    params_default: dict = field(default_factory=dict)
    region: GridSpec = EX1_REGION
    exclusions: tuple = ()
    side_conditions: tuple = ()
    gauge_note: bool = False
    sign_check: Optional[str] = None
    sign_region: Optional[GridSpec] = None
    carry_y_h: Optional[str] = None
    carry_expected: Optional[str] = None
    basepoint: Optional[tuple] = None
    fit_points: tuple = ()
    transport_box: Optional[GridSpec] = None
    description: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "u": self.u,
            "y_h": self.y_h,
            "y": self.y,
            "expected_potential": self.expected_potential,
            "expected_solution": self.expected_solution,
            "params_default": dict(self.params_default),
            "region": self.region.to_json(),
            "exclusions": [list(e) for e in self.exclusions],
            "side_conditions": [list(c) for c in self.side_conditions],
            "gauge_note": self.gauge_note,
            "sign_check": self.sign_check,
            "sign_region": self.sign_region.to_json() if self.sign_region else None,
            "carry_y_h": self.carry_y_h,
            "carry_expected": self.carry_expected,
            "basepoint": list(self.basepoint) if self.basepoint else None,
        }


_CONE = (("r^2 - 2*z^2", 0.05),)

_ENTRIES = (
    CatalogEntry(
        name="trivial-pair",
        description="Any seed with its trivial partner 1/(r*Y_h).",
        u="0", y_h="r^2 - 2*z^2", y="r^2 - 2*z^2",
        expected_potential=U1,
        expected_solution="1/(r*(r^2 - 2*z^2))",
        exclusions=_CONE,
    ),
    CatalogEntry(
        name="ex1-first",
        description="Harmonic polynomial seed r^2 - 2z^2 on the zero potential.",
        u="0", y_h="r^2 - 2*z^2", y="z",
        expected_potential=U1, expected_solution=Y1,
        params_default={"C1": 1.0}, exclusions=_CONE, gauge_note=True,
        basepoint=(1.5, 0.0), fit_points=((1.2, 0.3), (2.5, -0.4)),
        transport_box=GridSpec(1.0, 3.0, -0.6, 0.6, 2, 2),
    ),
    CatalogEntry(
        name="ex1-second",
        description="Second transformation of ex1 with the seed Y1.",
        u=U1, y_h=Y1, y=YS_FIRST,
        expected_potential=U1_SECOND, expected_solution=YS_SECOND,
        params_default={"C1": 1.0}, exclusions=_CONE,
        side_conditions=(("C1 > 0", "finite everywhere"),),
        gauge_note=True,
        sign_check="finite", sign_region=GridSpec(0.05, 5.0, -5.0, 5.0, 200, 200),
    ),
    CatalogEntry(
        name="ex1-carried",
        description="The spherical solution 1/sqrt(r^2+z^2) transported through both ex1 stages.",
        u="0", y_h="r^2 - 2*z^2", y=YS,
        expected_potential=U1, expected_solution=YS_FIRST,
        params_default={"C1": 0.0}, exclusions=_CONE, gauge_note=True,
        carry_y_h=Y1, carry_expected=YS_SECOND,
        basepoint=(0.5, 1.0), fit_points=((0.4, 1.5), (0.8, 2.0)),
    ),
    CatalogEntry(
        name="ex2-first",
        description="Seed sin(kz) on the constant potential -k^2.",
        u="-k^2", y_h="sin(k*z)", y="cos(k*z)",
        expected_potential=U2, expected_solution=Y2,
        params_default={"k": 1.0, "C2": 5.0}, region=EX2_REGION,
        exclusions=(("sin(k*z)", 0.05),), gauge_note=True,
        basepoint=(1.0, 1.5), fit_points=((0.7, 1.0), (2.0, 2.2)),
        transport_box=GridSpec(0.5, 3.0, 0.3, 2.8, 2, 2),
    ),
    CatalogEntry(
        name="ex2-second",
        description="Second transformation of ex2 with the seed Y2.",
        u=U2, y_h=Y2, y="1/(r*sin(k*z))",
        expected_potential=U2_SECOND, expected_solution=Y2_SECOND,
        params_default={"k": 1.0, "C2": 5.0}, region=EX2_REGION,
        exclusions=(("sin(k*z)", 0.05),),
        side_conditions=(("C2 > 4/k^2", "negative everywhere"),),
        sign_check="negative", sign_region=GridSpec(0.05, 10.0, -3.0, 3.0, 200, 200),
    ),
    CatalogEntry(
        name="ex3-first",
        description="Spherical-wave seed centred at z = -z0 on the constant potential -k^2.",
        u="-k^2", y_h=f"sin(k*{RHO3})/{RHO3}", y=f"cos(k*{RHO3})/{RHO3}",
        expected_potential=U3, expected_solution=Y3,
        params_default={"k": 2.0, "z0": 3.0, "C3": 1.0}, region=EX3_REGION,
        exclusions=((f"sin(k*{RHO3})", 0.05),), gauge_note=True,
        basepoint=(1.0, 0.8), fit_points=((0.6, 0.5), (1.4, 1.1)),
        transport_box=GridSpec(0.5, 1.5, 0.3, 1.2, 2, 2),
    ),
    CatalogEntry(
        name="ex3-second",
        description="Second transformation of ex3 with the seed Y3.",
        u=U3, y_h=Y3, y=f"1/(r*sin(k*{RHO3})/{RHO3})",
        expected_potential=U3_SECOND, expected_solution=Y3_SECOND,
        params_default={"k": 2.0, "z0": 3.0, "C3": 1.0}, region=EX3_REGION,
        exclusions=((f"sin(k*{RHO3})", 0.05),),
        side_conditions=(("2/(z0^2*(1 + C3)) < k^2", "negative for z >= 0"),),
        sign_check="negative", sign_region=GridSpec(0.05, 10.0, 0.0, 10.0, 200, 200),
    ),
)

_BY_NAME = {e.name: e for e in _ENTRIES}


class UnknownEntryError(KeyError):
    pass


def list_entries() -> list:
    return [e.name for e in _ENTRIES]


def get_entry(name: str) -> CatalogEntry:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise UnknownEntryError(f"unknown catalog entry {name!r}; known: {', '.join(list_entries())}") from None


def export_json() -> list:
    return [e.to_json() for e in _ENTRIES]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""

    def to_json(self) -> dict:
        return {"check": self.name, "passed": self.passed, "value": self.value,
                "tolerance": self.tolerance, "detail": self.detail}


@dataclass
class EntryReport:
    name: str
    params: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"entry": self.name, "passed": self.passed, "params": self.params,
                "checks": [c.to_json() for c in self.checks]}


DEFAULT_TOLERANCES = {"equality": 1e-9, "residual": 1e-7, "gauge": 1e-6, "carry": 1e-5}


def random_regular_points(exprs, params, grid: GridSpec, n: int, seed: int = 0, exclusions=(),
                          threshold: float = 1e-8):
    """``n`` uniform points in ``grid`` where every expression evaluates regularly."""
    rng = np.random.default_rng(seed)
    exs = [parse(e) if isinstance(e, str) else e for e in exprs]
    guards = [(parse(e) if isinstance(e, str) else e, eps) for e, eps in exclusions]
    comp = compile_exprs(tuple(exs) + tuple(g for g, _ in guards), params)
    out_r, out_z = [], []
    for _ in range(50):
        r = rng.uniform(grid.r_min, grid.r_max, 4 * n)
        z = rng.uniform(grid.z_min, grid.z_max, 4 * n)
        vals, bad, ratio = comp.vector(r, z)
        ok = ~bad & (ratio >= threshold)
        for k, (_, eps) in enumerate(guards):
            ok &= np.abs(vals[len(exs) + k]) >= eps
        out_r.extend(r[ok])
        out_z.extend(z[ok])
        if len(out_r) >= n:
            break
    if len(out_r) < n:
        raise EmptyDomainError("could not find enough regular sample points")
    return np.array(out_r[:n]), np.array(out_z[:n])


def compare_exprs(a, b, params, grid: GridSpec, n: int = 100, seed: int = 0, exclusions=()) -> float:
    """Largest relative difference of two expressions at random regular points."""
    a = parse(a) if isinstance(a, str) else a
    b = parse(b) if isinstance(b, str) else b
    r, z = random_regular_points([a, b], params, grid, n, seed, exclusions)
    (va, vb), _, _ = compile_exprs((a, b), params).vector(r, z)
    return float(np.max(np.abs(va - vb) / np.maximum(np.maximum(np.abs(va), np.abs(vb)), 1e-300)))


def sign_scan(expr, params, grid: GridSpec) -> dict:
    """Min, max, sign changes and singular count of an expression over a grid."""
    e = parse(expr) if isinstance(expr, str) else expr
    rr, zz = grid.mesh()
    (v,), bad, ratio = compile_exprs((e,), params).vector(rr, zz)
    singular = bad | ~np.isfinite(v)
    good = v[~singular]
    sg = np.where(singular, 0.0, np.sign(v))
    changes = int(np.sum(sg[1:, :] * sg[:-1, :] < 0) + np.sum(sg[:, 1:] * sg[:, :-1] < 0))
    return {
        "grid": grid.to_json(),
        "n_points": int(v.size),
        "n_singular": int(singular.sum()),
        "min": float(good.min()) if good.size else None,
        "max": float(good.max()) if good.size else None,
        "sign_changes": changes,
        "min_abs_denominator_ratio": float(np.min(ratio)) if ratio.size else None,
    }


def _check(name, fn, tol=None) -> CheckResult:
    try:
        value, ok, detail = fn()
        return CheckResult(name, bool(ok), value, tol, detail)
    except (SeedNotSolutionError, EmptyDomainError, NoPathFoundError, ArithmeticError, ValueError) as exc:
        return CheckResult(name, False, None, tol, f"{type(exc).__name__}: {exc}")


def verify_entry(name: str, params: Optional[dict] = None, tolerances: Optional[dict] = None) -> EntryReport:
    """Run every check that applies to a catalog entry."""
    e = get_entry(name)
    tol = dict(DEFAULT_TOLERANCES, **(tolerances or {}))
    p = dict(e.params_default, **(params or {}))
    checks = []

    ut_holder = {}

    def potential_match():
        ut = transform_potential(e.u, e.y_h, p, e.region, tol["residual"])
        ut_holder["u"] = ut
        err = compare_exprs(ut.expr, e.expected_potential, p, e.region, 100, 0, e.exclusions)
        return err, err < tol["equality"], "transformed potential vs transcribed closed form"

    checks.append(_check("potential", potential_match, tol["equality"]))

    def seed_residual():
        rep = residual_report(e.u, e.y_h, e.region, p, e.exclusions)
        return rep.max_rel_residual, rep.max_rel_residual < tol["residual"], f"seed under u ({rep.n_evaluated} points)"

    checks.append(_check("seed-residual", seed_residual, tol["residual"]))

    def partner_residual():
        rep = residual_report(e.expected_potential, trivial_partner(e.y_h), e.region, p, e.exclusions)
        return rep.max_rel_residual, rep.max_rel_residual < tol["residual"], "trivial partner under expected potential"

    checks.append(_check("partner-residual", partner_residual, tol["residual"]))

    if e.y is not None:
        def y_residual():
            rep = residual_report(e.u, e.y, e.region, p, e.exclusions)
            return rep.max_rel_residual, rep.max_rel_residual < tol["residual"], "transported solution under u"

        checks.append(_check("y-residual", y_residual, tol["residual"]))

    if e.expected_solution is not None:
        def solution_residual():
            rep = residual_report(e.expected_potential, e.expected_solution, e.region, p, e.exclusions)
            return rep.max_rel_residual, rep.max_rel_residual < tol["residual"], "expected solution under expected potential"

        checks.append(_check("solution-residual", solution_residual, tol["residual"]))

    if e.sign_check is not None:
        def sign():
            scan = sign_scan(e.expected_potential, p, e.sign_region)
            if e.sign_check == "finite":
                ok = scan["n_singular"] == 0
                return float(scan["n_singular"]), ok, f"finite on the scan grid, min {scan['min']:.6g}"
            ok = scan["n_singular"] == 0 and scan["max"] is not None and scan["max"] < 0
            return scan["max"], ok, f"max {scan['max']:.6g} over {scan['n_points']} points"

        checks.append(_check(f"sign-{e.sign_check}", sign))

    if e.transport_box is not None:
        def transported():
            fld = TransformedSolutionField(e.y, e.y_h, p, e.basepoint, tol=1e-10)
            _, _, fitted = gauge_fit(fld, e.expected_solution, e.fit_points, p)
            r, z = random_regular_points([e.expected_solution, e.y_h], p, e.transport_box, 50, seed=3,
                                         exclusions=e.exclusions)
            err, n = compare_field(fitted, e.expected_solution, list(zip(r, z)), p)
            return err, n == 50 and err < tol["gauge"], f"{n} held-out points after the two-constant fit"

        checks.append(_check("transport-gauge-fit", transported, tol["gauge"]))

    if e.carry_y_h is not None:
        def carried():
            base = e.basepoint
            f1 = TransformedSolutionField(e.y, e.y_h, p, base, tol=1e-9)
            _, _, g1 = gauge_fit(f1, e.expected_solution, e.fit_points, p)
            pts = _held_out(e.expected_solution, p, base, 50)
            err1, n1 = compare_field(g1, e.expected_solution, pts, p)
            f2 = TransformedSolutionField(g1, e.carry_y_h, p, base, tol=1e-9)
            _, _, g2 = gauge_fit(f2, e.carry_expected, e.fit_points, p)
            err2, n2 = compare_field(g2, e.carry_expected, pts, p)
            ok = n1 >= 40 and n2 >= 40 and err1 < tol["gauge"] and err2 < tol["carry"]
            return max(err1, err2), ok, f"stage errors {err1:.2e} ({n1} pts), {err2:.2e} ({n2} pts)"

        checks.append(_check("carried-gauge-fit", carried, tol["carry"]))

    return EntryReport(name, p, checks)


def _held_out(expected, params, base, n):
    """Points in the base point's component of the cone complement, away from zeros of ``expected``."""
    region = GridSpec(0.1, 2.0, 0.5, 4.0, 2, 2)
    r, z = random_regular_points([expected], params, region, 4 * n, seed=7,
                                 exclusions=(("r^2 - 2*z^2", 0.3), (expected, 1e-3)))
    keep = r * r < 2 * z * z
    return list(zip(r[keep][:n], z[keep][:n]))
