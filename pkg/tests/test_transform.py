from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from moutard.catalog import U1, U1_SECOND, U2, U2_SECOND, Y1, Y2, YS, YS_FIRST, YS_SECOND
from moutard.exprlang import Func, compile_exprs, evaluate, parse, simplify, substitute
from moutard.exprlang.nodes import R
from moutard.quadrature import GridSpec, NoPathFoundError, PathPlan, Segment
from moutard.schrodinger import SeedSolution, potential_from_h, residual_report
from moutard.transform import (
    ChainError, DegenerateSeedError, IncoherentSeedsError, SeedNotSolutionError, TransformedSolutionField,
    chain, choose_basepoint, compare_field, field_residual_report, gauge_fit, involution_check, make_oneform,
    make_step, transform_potential, transform_potential_from_h, transform_solution, trivial_partner,
)

CONE = [("r^2-2*z^2", 0.05)]


def _points(n=50, seed=0, r=(0.3, 3.0), z=(-2.0, 2.0)):
    rng = np.random.default_rng(seed)
    return rng.uniform(*r, n), rng.uniform(*z, n)


def _agree(a, b, params=None, rel=1e-9, **kw):
    r, z = _points(**kw)
    (va, vb), bad, ratio = compile_exprs((a, b), params).vector(r, z)
    ok = ~bad & (ratio > 1e-6)
    assert ok.sum() > 20
    err = np.abs(va - vb)[ok] / np.maximum(np.abs(va), np.abs(vb))[ok].clip(1e-300)
    assert err.max() < rel


def test_eq17_value():
    ut = transform_potential("0", "r^2-2*z^2")
    assert evaluate(ut.expr, 1.0, 1.0) == pytest.approx(37.0, rel=1e-14)
    _agree(ut.expr, parse(U1))


def test_eq21_value():
    ut = transform_potential("-k^2", "sin(k*z)", {"k": 1.0})
    assert evaluate(ut.expr, 1.0, math.pi / 2, {"k": 1.0}) == pytest.approx(2.0, rel=1e-14)


def test_eq22_value():
    p = {"k": 1.0, "C2": 5.0}
    ut = transform_potential(U2, Y2, p)
    for z in (0.3, 1.0, 2.5):
        assert evaluate(ut.expr, 1.0, z, p) == pytest.approx(-13.0 / 9.0, rel=1e-12)


def test_from_h_route_examples():
    ut = transform_potential_from_h("-k^2", "-ln(r*sin(k*z))")
    assert evaluate(ut.expr, 1.0, math.pi / 2, {"k": 1.0}) == pytest.approx(2.0, rel=1e-14)
    zero = transform_potential_from_h("1/r^2", "0")
    assert evaluate(zero.expr, 1.3, 0.2) == 0.0


@pytest.mark.parametrize("h", ["z^2*r", "sin(r)*cos(z)", "ln(1 + r^2) - z*r"])
def test_routes_agree_for_arbitrary_h(h):
    u = potential_from_h(h)
    y_h = simplify(Func("exp", -parse(h)) / R)
    a = transform_potential(u, y_h, grid=GridSpec(0.3, 2.0, -1.0, 1.0, 15, 15)).expr
    b = transform_potential_from_h(u, h).expr
    _agree(a, b, r=(0.3, 2.0), z=(-1.0, 1.0))


def test_seed_rejected():
    with pytest.raises(SeedNotSolutionError, match="not a solution"):
        transform_potential("0", "r")


def test_degenerate_seed():
    with pytest.raises(DegenerateSeedError):
        transform_potential("0", "0*r")


def test_verification_can_be_skipped():
    ut = transform_potential("0", "r", verify=False)
    assert ut.expr is not None


@pytest.mark.parametrize("c", ["-3", "1/2", "7"])
def test_seed_scale_invariance(c):
    a = transform_potential("0", "r^2-2*z^2").expr
    b = transform_potential("0", f"{c}*(r^2-2*z^2)").expr
    _agree(a, b, rel=1e-12)


def test_shift_equivariance():
    shift = {"z": parse("z + z0")}
    p = {"k": 2.0, "z0": 0.7}
    u, y_h = parse("-k^2"), parse("sin(k*sqrt(r^2+z^2))/sqrt(r^2+z^2)")
    a = transform_potential(substitute(u, shift), substitute(y_h, shift), p).expr
    b = substitute(transform_potential(u, y_h, p).expr, shift)
    _agree(a, b, p)


def test_oneform_example_one():
    f = make_oneform("z", "r^2-2*z^2")
    r, z = _points()
    (a, b), _, _ = f.compiled().vector(r, z)
    assert np.allclose(a, -r ** 3 - 2 * r * z ** 2, rtol=1e-14)
    assert np.allclose(b, -2 * r ** 2 * z, rtol=1e-14)
    assert f.closedness_report().max_abs_residual == 0.0


def test_oneform_of_equal_seeds_is_zero():
    f = make_oneform("r^2-2*z^2", "r^2-2*z^2")
    (a, b), _, _ = f.compiled().vector(*_points())
    assert np.all(a == 0) and np.all(b == 0)


def test_incoherent_seeds():
    with pytest.raises(IncoherentSeedsError):
        make_oneform("z", "sin(k*z)", {"k": 1.0})


def test_transform_solution_example_one():
    fld = TransformedSolutionField("z", "r^2-2*z^2", basepoint=(1.0, 0.0))
    assert transform_solution(fld, (1.0, 1.0)) == pytest.approx(1.0, rel=1e-13)
    assert fld.potential_value((1.0, 1.0)) == pytest.approx(-1.0, rel=1e-13)
    assert fld.potential_value((1.0, 0.0)) == 0.0


def test_equal_seed_field_is_trivial_partner():
    fld = TransformedSolutionField("r^2-2*z^2", "r^2-2*z^2", basepoint=(1.0, 0.0), additive_constant=3.0)
    for r, z in [(2.0, 0.5), (1.5, -0.3), (4.0, 2.0)]:
        assert fld.value(r, z) == pytest.approx(3.0 / (r * (r * r - 2 * z * z)), rel=1e-14)


def test_zero_seed_at_target():
    fld = TransformedSolutionField("r^2-2*z^2", "z", basepoint=(1.0, 1.0))
    with pytest.raises(ZeroDivisionError):
        fld.value(1.0, 0.0)


def test_basepoint_must_be_regular():
    with pytest.raises(ValueError):
        TransformedSolutionField(YS_FIRST, Y1, {"C1": 1.0}, basepoint=(1.0, math.sqrt(0.5)))


def test_eq19_after_gauge_fit():
    fld = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(2.0, 0.3), tol=1e-10)
    alpha, beta, fitted = gauge_fit(fld, YS_FIRST, [(2.5, 0.5), (3.0, -0.4)])
    assert alpha == pytest.approx(-1.0 / 3.0, rel=1e-10)
    r, z = _points(40, 4, r=(1.5, 4.0), z=(-0.9, 0.9))
    pts = [(a, b) for a, b in zip(r, z) if abs(b) > 0.05 and a * a > 2 * b * b + 0.2]
    err, n = compare_field(fitted, YS_FIRST, pts)
    assert n == len(pts) > 20 and err < 1e-8


def test_transported_field_residual():
    fld = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(2.0, 0.3))
    rep = field_residual_report(U1, fld, GridSpec(1.5, 3.0, -0.5, 0.8, 4, 4))
    assert rep.n_evaluated == 16 and rep.max_rel_residual < 1e-8
    rep2 = residual_report(U1, fld, GridSpec(1.5, 3.0, -0.5, 0.8, 3, 3))
    assert rep2.max_rel_residual < 1e-8


def test_transported_field_not_solution_of_old_potential():
    fld = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(2.0, 0.3))
    rep = field_residual_report("0", fld, GridSpec(1.5, 3.0, -0.5, 0.8, 3, 3))
    assert rep.max_rel_residual > 1e-3


def test_jet_matches_closed_form_derivatives():
    fld = TransformedSolutionField("z", "r^2-2*z^2", basepoint=(1.0, 0.0))
    # from base (1, 0) the raw field is -Y1/4 with C1 = -1
    from moutard.exprlang import evaluate_hyperdual
    ref = evaluate_hyperdual(parse(f"-1/4*({Y1})"), 2.0, 0.4, {"C1": -1.0}).as_tuple()
    got = fld.jet(2.0, 0.4).as_tuple()
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-13)


def test_path_independence():
    fld = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(2.0, 0.3))
    rng = np.random.default_rng(9)
    for _ in range(20):
        t = (rng.uniform(1.5, 4.0), rng.uniform(-0.9, 0.9))
        b = fld.basepoint
        p1 = PathPlan((Segment(b, (t[0], b[1])), Segment((t[0], b[1]), t)))
        p2 = PathPlan((Segment(b, (b[0], t[1])), Segment((b[0], t[1]), t)))
        v1, v2 = fld.states_along(p1)[fld], fld.states_along(p2)[fld]
        assert abs(v1 - v2) <= 1e-8 * max(1.0, abs(v1))


def test_nested_path_independence():
    inner = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(0.5, 1.0))
    outer = TransformedSolutionField(inner, Y1, {"C1": 0.0}, basepoint=(0.5, 1.0))
    t, b = (1.0, 2.0), outer.basepoint
    p1 = PathPlan((Segment(b, (t[0], b[1])), Segment((t[0], b[1]), t)))
    p2 = PathPlan((Segment(b, (b[0], t[1])), Segment((b[0], t[1]), t)))
    v1, v2 = outer.states_along(p1)[outer], outer.states_along(p2)[outer]
    assert abs(v1 - v2) <= 1e-8 * max(1.0, abs(v1))


def test_nested_requires_shared_basepoint():
    inner = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(0.5, 1.0))
    with pytest.raises(ValueError, match="base point"):
        TransformedSolutionField(inner, Y1, {"C1": 0.0}, basepoint=(0.6, 1.0))


def test_nested_field_stays_in_component():
    inner = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(0.5, 1.0))
    outer = TransformedSolutionField(inner, Y1, {"C1": 0.0}, basepoint=(0.5, 1.0))
    with pytest.raises(NoPathFoundError):
        outer.value(2.0, 0.0)


def test_eq20_second_transport():
    inner = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(0.5, 1.0), tol=1e-9)
    _, _, g1 = gauge_fit(inner, YS_FIRST, [(0.4, 1.5), (0.8, 2.0)])
    outer = TransformedSolutionField(g1, Y1, {"C1": 0.0}, basepoint=(0.5, 1.0), tol=1e-9)
    alpha, _, g2 = gauge_fit(outer, YS_SECOND, [(0.4, 1.5), (0.8, 2.0)], {"C1": 0.0})
    assert alpha == pytest.approx(-3.0, rel=1e-8)
    assert g2.value(1.0, 1.0) == pytest.approx(3.0 / (5.0 * math.sqrt(2.0)), rel=1e-7)


def test_regauged_keeps_cache_consistent():
    fld = TransformedSolutionField("z", "r^2-2*z^2", basepoint=(1.0, 0.0))
    v = fld.value(2.0, 1.0)
    g = fld.regauged(2.0, 0.5)
    assert g.value(2.0, 1.0) == pytest.approx(2.0 * v + 0.5 / (2.0 * 2.0), rel=1e-14)
    fresh = TransformedSolutionField("z", "r^2-2*z^2", basepoint=(1.0, 0.0), scale=2.0, additive_constant=0.5)
    assert fresh.value(2.0, 1.0) == pytest.approx(g.value(2.0, 1.0), rel=1e-13)


def test_concurrent_evaluation_is_order_independent():
    pts = [(1.0 + 0.1 * i, 0.05 * j) for i in range(6) for j in range(-4, 5)]
    seq = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(2.0, 0.3))
    expected = [seq.value(*p) for p in pts]
    par = TransformedSolutionField(YS, "r^2-2*z^2", basepoint=(2.0, 0.3))
    with ThreadPoolExecutor(max_workers=6) as pool:
        got = list(pool.map(lambda p: par.value(*p), reversed(pts)))
    assert list(reversed(got)) == expected


def test_hand_derived_transport_of_trivial_partner():
    # 1/(r sin kz) solves the first transformed equation; carried through Y2 it
    # becomes cos(kz)/(r^2 + C2) up to gauge
    p = {"k": 1.0, "C2": 5.0}
    fld = TransformedSolutionField("1/(r*sin(k*z))", Y2, p, basepoint=(1.0, 1.0))
    target = "cos(k*z)/(r^2 + C2)"
    assert residual_report(U2_SECOND, target, GridSpec(0.2, 3.0, 0.2, 1.4, 10, 10), p).max_rel_residual < 1e-12
    _, _, fitted = gauge_fit(fld, target, [(0.5, 0.5), (2.0, 1.2)])
    err, n = compare_field(fitted, target, [(0.7, 0.3), (1.5, 0.9), (2.5, 1.3), (0.4, 1.1)])
    assert n == 4 and err < 1e-9


def test_trivial_partner_examples():
    assert evaluate(trivial_partner("1").expr, 2.0, 0.0) == 0.5
    p = {"k": 1.0, "C2": 5.0}
    tp = trivial_partner(Y2).expr
    _agree(tp, parse("sin(k*z)/(r^2 + C2)"), p, z=(0.2, 3.0))
    assert residual_report(transform_potential("-k^2", "sin(k*z)", {"k": 1.0}), trivial_partner("sin(k*z)"),
                           params={"k": 1.0}).max_rel_residual < 1e-7


@pytest.mark.parametrize("u,y_h,params", [("0", "r^2-2*z^2", {}), ("-k^2", "sin(k*z)", {"k": 1.0}), ("0", "1", {})])
def test_involution(u, y_h, params):
    rep = involution_check(u, y_h, params=params)
    assert rep.max_rel_residual < 1e-9


def test_step_json():
    step = make_step("0", "r^2-2*z^2")
    d = json.loads(json.dumps(step.to_json()))
    assert set(d) >= {"u", "y_h", "u_tilde", "verification", "params"}
    assert "ln(r)" in step.h_tilde_note


def test_chain_two_stages_with_carried():
    steps = chain("0", ["r^2-2*z^2", Y1], carried=[YS], params={"C1": 1.0}, basepoint=(0.5, 1.0))
    assert len(steps) == 2
    assert evaluate(steps[-1].u_tilde.expr, 1.0, 0.0, {"C1": 1.0}) == pytest.approx(-12.0, rel=1e-12)
    _agree(steps[-1].u_tilde.expr, parse(U1_SECOND), {"C1": 1.0})
    for st in steps:
        assert all(rep.max_rel_residual < 1e-7 for rep in st.carried_reports)


def test_chain_failure_reports_stage():
    with pytest.raises(ChainError) as info:
        chain("0", ["r^2-2*z^2", "z"])
    assert info.value.stage == 1


def test_choose_basepoint():
    g = GridSpec(0.1, 3.0, -2.0, 2.0, 30, 30)
    r, z = choose_basepoint(["r^2-2*z^2"], g)
    assert r * r - 2 * z * z > 1.0
    assert 0.1 < r < 3.0 and -2.0 < z < 2.0
