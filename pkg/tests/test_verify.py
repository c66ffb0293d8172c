import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinodal.geometry import make_domain, width_profile
from thinodal.laplace2d import build_mesh, solve_first_neumann
from thinodal.sl_solver import solve_first_eigen
from thinodal.verify import (CSV_COLUMNS, FLOORS, SLOPE_QUANTITIES, FloorError, SlopeFit,
                             fit_slope, one_sided_limit, profile_difference, run_pair,
                             sandwich_check, scaling_study, stability, with_scaled_solution)

EPS_GRID = (0.2, 0.1, 0.05, 0.025)


# --- slope fits --------------------------------------------------------------

def test_fit_quadratic():
    f = fit_slope([(0.2, 0.04), (0.1, 0.01), (0.05, 0.0025)])
    assert f.slope == pytest.approx(2.0, abs=1e-12) and f.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_two_points():
    assert fit_slope([(0.2, 0.2), (0.1, 0.1)]).slope == pytest.approx(1.0, abs=1e-12)


def test_fit_all_floor():
    with pytest.raises(FloorError):
        fit_slope([(0.1, 1e-13), (0.05, 1e-13)])


def test_fit_counts_floor_points():
    f = fit_slope([(0.2, 0.04), (0.1, 0.01), (0.05, 1e-14)])
    assert (f.n_used, f.n_floor) == (2, 1)
    with pytest.raises(ValueError):
        fit_slope([(0.2, 0.04), (0.1, 1e-14)])


@settings(max_examples=50, deadline=None)
@given(p=st.floats(0.5, 4.0), c=st.floats(1e-3, 1e3))
def test_fit_recovers_power_law(p, c):
    pts = [(e, c * e ** p) for e in EPS_GRID]
    f = fit_slope(pts)
    assert f.slope == pytest.approx(p, abs=1e-9)
    assert f.intercept == pytest.approx(math.log(c), abs=1e-8)


# --- normalization and sandwich ---------------------------------------------

@pytest.fixture(scope="module")
def trapezoid_pair():
    dom = make_domain("trapezoid", 0.1)
    pair = solve_first_eigen(width_profile(dom))
    sol = solve_first_neumann(build_mesh(dom, 512, 8))
    fine = solve_first_neumann(build_mesh(dom, 1024, 16))
    return pair, sol, fine


@settings(max_examples=10, deadline=None)
@given(f=st.floats(1e-4, 1e4))
def test_sup_diff_invariant_under_scaling(trapezoid_pair, f):
    pair, sol, fine = trapezoid_pair
    a, u0, _ = profile_difference(pair, sol, fine)
    b, v0, _ = profile_difference(pair, sol.scaled(f), fine.scaled(f))
    assert b == pytest.approx(a, rel=1e-10)
    assert v0 == pytest.approx(f * u0, rel=1e-12)


def test_one_sided_limit_recovers_even_polynomial():
    xs = np.linspace(0, 1, 257)
    ub = 2.0 - 3.0 * xs ** 2 + 0.5 * xs ** 4
    ub_bad = ub.copy()
    ub_bad[0] = 7.0
    assert one_sided_limit(xs, ub_bad, True) == pytest.approx(2.0, abs=1e-10)
    assert one_sided_limit(xs, ub_bad, False) == 7.0


@pytest.fixture(scope="module")
def rectangle_row():
    return run_pair("rectangle", 0.1)


def test_rectangle_row(rectangle_row, goldens):
    r = rectangle_row
    assert abs(r.gap) <= 1e-8
    assert r.sup_diff <= 2e-3 and r.width <= 1e-8 and r.dist_s1 <= 1e-6
    assert r.mesh_tag == "nx1024-ny8"
    assert len(r.csv_values()) == len(CSV_COLUMNS)
    assert r.triangle_ok


def test_rectangle_sandwich(rectangle_row):
    res = sandwich_check(rectangle_row)
    assert res.passed and res.flags == ()
    assert res.margins["lower"] == pytest.approx(rectangle_row.tol_disc, abs=1e-8)


def test_synthetic_variational_violation(rectangle_row):
    tol = rectangle_row.tol_disc
    bad = with_scaled_solution(rectangle_row, mu=rectangle_row.lam - 10 * tol - 1e-9)
    res = sandwich_check(bad)
    assert not res.passed and "variational violation" in res.flags


def test_synthetic_gap_and_window(rectangle_row):
    big = with_scaled_solution(rectangle_row, mu=rectangle_row.lam + 5.0)
    assert "gap above cap" in sandwich_check(big).flags
    out = with_scaled_solution(rectangle_row, lam=0.5, mu=0.5)
    assert "eigenvalue window" in sandwich_check(out).flags


def test_run_pair_eps_range():
    for eps in (0.005, 0.3):
        with pytest.raises(ValueError):
            run_pair("wedge", eps)


def test_stability_sign_change(rectangle_row):
    a = with_scaled_solution(rectangle_row, grad_ratio=2.0)
    b = with_scaled_solution(rectangle_row, grad_ratio=-1.0)
    c = with_scaled_solution(rectangle_row, grad_ratio=1.0)
    assert stability([a, c], ["grad_ratio"])["grad_ratio"] == 2.0
    assert stability([a, b], ["grad_ratio"])["grad_ratio"] == math.inf


# --- studies -----------------------------------------------------------------

def test_study_needs_four_rows():
    with pytest.raises(ValueError):
        scaling_study("wedge", (0.2, 0.1, 0.05))


def test_rectangle_study_at_floor(get_study):
    rep = get_study("rectangle")
    assert all(rep.slopes[q] == "floor" for q in SLOPE_QUANTITIES)
    assert not rep.flagged
    for r in rep.rows:
        for q in SLOPE_QUANTITIES:
            assert r.get(q) <= FLOORS[q]


@pytest.mark.parametrize("family", ["wedge", "trapezoid"])
def test_study_structure(get_study, family):
    rep = get_study(family)
    assert [r.eps for r in rep.rows] == sorted(EPS_GRID, reverse=True)
    for q in SLOPE_QUANTITIES:
        s = rep.slopes[q]
        assert isinstance(s, SlopeFit) and s.n_used == 4 and 0 <= s.r2 <= 1
    assert set(rep.refinement_deltas) >= set(SLOPE_QUANTITIES)
    summary = rep.summary()
    assert summary["family"] == family and len(summary["eps"]) == 4


@pytest.mark.parametrize("family", ["rectangle", "wedge", "trapezoid", "lens", "polygon"])
def test_every_row_sandwiched(get_study, family):
    for r in get_study(family).rows:
        assert r.lam <= r.mu + r.tol_disc
        assert sandwich_check(r).passed, (r.eps, sandwich_check(r))
        assert r.triangle_ok


@pytest.mark.parametrize("family", ["wedge", "trapezoid"])
def test_gap_monotone(get_study, family):
    gaps = [r.gap for r in get_study(family).rows]
    assert all(b <= 1.1 * a for a, b in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("family", ["wedge", "trapezoid", "polygon"])
def test_zero_location_away_from_ends(get_study, family):
    d = [min(r.s0, 1 - r.s0) for r in get_study(family).rows]
    assert min(d) > 0.2
    assert d[-1] >= 0.9 * d[0]


MESH_CASES = [(f, q) for f in ("wedge", "trapezoid") for q in SLOPE_QUANTITIES]


@pytest.mark.parametrize("family, quantity", [
    pytest.param(f, q, marks=pytest.mark.xfail(
        strict=True, reason="tip-limit extrapolation of ubar(0+) moves the wedge sup_diff slope "
                            "by about 0.17 at doubled resolution"))
    if (f, q) == ("wedge", "sup_diff") else (f, q) for f, q in MESH_CASES])
def test_slopes_mesh_independent(get_study, family, quantity):
    assert get_study(family).slope_deltas[quantity] < 0.15
