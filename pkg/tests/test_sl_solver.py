import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinodal.geometry import InvalidWeightError, callable_weight, polynomial_weight
from thinodal.sl_solver import (patch_radius, picard_local, rayleigh_quotient_1d, s1_of_mu,
                                shoot, solve_first_eigen, weighted_integral)

CONST, LINEAR, AFFINE, BUMP = (1.0,), (0.0, 1.0), (1.0, 1.0), (0.05, 1.0, -1.0)
WEIGHTS = [CONST, LINEAR, AFFINE, BUMP, (0.0, 1.0, -1.0)]


# --- Picard patch ------------------------------------------------------------

def test_picard_zero_eigenvalue():
    p = picard_local(polynomial_weight([1.0]), 0.0)
    np.testing.assert_allclose(p.phi, 1.0, atol=1e-15)
    np.testing.assert_allclose(p.dphi, 0.0, atol=1e-15)


def test_picard_bessel(goldens):
    p = picard_local(polynomial_weight([0.0, 1.0]), 1.0, delta=0.1)
    phi, _ = p.evaluate(0.1)
    assert phi[0] == pytest.approx(goldens["j0_at_0.1"], abs=1e-14)


def test_picard_zero_data():
    p = picard_local(polynomial_weight([0.0, 1.0]), 14.0, phi0=0.0)
    assert np.all(p.phi == 0.0) and np.all(p.dphi == 0.0)


@pytest.mark.parametrize("mu", [0.5, 14.7, 1e3, 1e5])
def test_patch_radius_contracts(mu):
    d = patch_radius(polynomial_weight([0.0, 1.0]), mu)
    assert mu * d * d <= 0.25 + 1e-15


def test_patch_rejects_nonpositive_weight():
    with pytest.raises(InvalidWeightError):
        picard_local(polynomial_weight([0.0, -1.0]), 1.0, delta=0.1)
    with pytest.raises(ValueError):
        picard_local(polynomial_weight([1.0]), -1.0)


@pytest.mark.parametrize("coefs", [LINEAR, (0.0, 1.0, -1.0)])
@pytest.mark.parametrize("mu", [1.0, 14.68, 200.0])
def test_patch_flatness_bound(coefs, mu):
    # |phi'(x)| <= mu x sup_{s <= x} |phi(s)| on the patch
    p = picard_local(polynomial_weight(list(coefs)), mu)
    x = np.linspace(0.0, p.delta, 301)
    phi, dphi = p.evaluate(x)
    bound = mu * x * np.maximum.accumulate(np.abs(phi))
    assert np.all(np.abs(dphi) <= bound * (1 + 1e-10) + 1e-15)
    assert phi[0] == pytest.approx(1.0, abs=1e-15) and abs(dphi[0]) <= 1e-15


# --- shooting ----------------------------------------------------------------

def test_shoot_cosine():
    res = shoot(polynomial_weight([1.0]), math.pi ** 2, stop_at_zero=False)
    x, phi, dphi = res.samples.T
    np.testing.assert_allclose(phi, np.cos(math.pi * x), atol=1e-10)
    np.testing.assert_allclose(dphi, -math.pi * np.sin(math.pi * x), atol=1e-9)
    assert res.s_zero == pytest.approx(0.5, abs=1e-12)
    assert res.samples[0, 1] == 1.0 and res.samples[0, 2] == 0.0


def test_shoot_second_mode_zero():
    assert shoot(polynomial_weight([1.0]), 4 * math.pi ** 2).s_zero == pytest.approx(0.25,
                                                                                    abs=1e-12)


def test_shoot_bessel_zero(goldens):
    res = shoot(polynomial_weight([0.0, 1.0]), goldens["wedge_mu"])
    assert res.s_zero == pytest.approx(goldens["wedge_s1"], abs=1e-10)


def test_shoot_right_mirrors_left():
    w = polynomial_weight([1.0, 1.0])
    right = shoot(w, 10.0, "right")
    left = shoot(polynomial_weight([2.0, -1.0]), 10.0, "left")
    assert right.s_zero == pytest.approx(1 - left.s_zero, abs=1e-12)
    assert right.samples[0, 0] == 1.0


@pytest.mark.parametrize("step", [0.0, 2e-3, -1e-4])
def test_shoot_rejects_step(step):
    with pytest.raises(ValueError):
        shoot(polynomial_weight([1.0]), 10.0, step=step)


def test_shoot_straddles_zero():
    res = shoot(polynomial_weight([1.0, 1.0]), 30.0)
    sol = res.solution
    i = np.searchsorted(sol.xs, res.s_zero)
    assert sol.ys[i - 1, 0] > 0 >= sol.ys[i, 0]


# --- s1(mu) ------------------------------------------------------------------

def test_s1_constant():
    w = polynomial_weight([1.0])
    assert s1_of_mu(w, math.pi ** 2) == pytest.approx(0.5, abs=1e-12)
    assert s1_of_mu(w, 4 * math.pi ** 2) == pytest.approx(0.25, abs=1e-12)
    assert s1_of_mu(w, 1.0) is None


MU_GRID = [10, 15, 20, 30, 50, 100, 1000]


@pytest.mark.parametrize("coefs", [CONST, LINEAR, AFFINE, BUMP])
def test_s1_strictly_decreasing(coefs):
    w = polynomial_weight(list(coefs))
    vals = [s1_of_mu(w, m) for m in MU_GRID + [1e4]]
    assert all(v is not None for v in vals)
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 0.1


# frozen from a direct shooting run; guards against silent solver drift
S1_LINEAR = {10: 0.7604726137703067, 15: 0.620923289032632, 20: 0.5377353421036619,
             30: 0.4390590682716158}


def test_s1_linear_goldens():
    w = polynomial_weight([0.0, 1.0])
    for mu, s in S1_LINEAR.items():
        assert s1_of_mu(w, mu) == pytest.approx(s, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.05, 1.0), b=st.floats(0.0, 1.0), m1=st.floats(12.0, 400.0),
       r=st.floats(1.05, 3.0))
def test_s1_monotone_property(a, b, m1, r):
    w = polynomial_weight([a, b])
    assert s1_of_mu(w, m1 * r) < s1_of_mu(w, m1)


def test_s1_scaled_weight_invariant():
    w = polynomial_weight([1.0, 1.0])
    assert s1_of_mu(w, 20.0) == s1_of_mu(w.scaled(7.0), 20.0)


# --- eigenpairs --------------------------------------------------------------

def test_constant_eigenpair(get_eigenpair):
    e = get_eigenpair(CONST)
    assert e.mu == pytest.approx(math.pi ** 2, rel=1e-12)
    assert e.s1 == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(e.phi, np.cos(math.pi * e.xs), atol=1e-10)
    assert len(e.xs) == 4097


def test_wedge_eigenpair(get_eigenpair, goldens):
    e = get_eigenpair(LINEAR)
    assert e.mu == pytest.approx(goldens["wedge_mu"], rel=1e-11)
    assert e.s1 == pytest.approx(goldens["wedge_s1"], abs=1e-11)


def test_affine_eigenpair(get_eigenpair, goldens):
    assert get_eigenpair(AFFINE).mu == pytest.approx(goldens["trapezoid_mu"], rel=1e-11)


@pytest.mark.parametrize("coefs", WEIGHTS)
def test_eigenpair_invariants(get_eigenpair, coefs):
    e = get_eigenpair(coefs)
    w = polynomial_weight(list(coefs))
    assert e.phi[0] == pytest.approx(1.0, abs=1e-14) and e.norm_value == e.phi[0]
    assert abs(e.dphi[0]) < 1e-12 and abs(e.dphi[-1]) < 1e-8
    assert np.all(np.diff(e.phi) <= 1e-10)
    assert np.count_nonzero(np.diff(np.sign(e.phi))) == 1
    assert abs(weighted_integral(w, e.xs, e.phi)) <= 1e-8 * weighted_integral(w, e.xs,
                                                                          np.abs(e.phi))
    assert rayleigh_quotient_1d(w, e.xs, e.phi, e.dphi) == pytest.approx(e.mu, rel=1e-8)
    assert e.glue_mismatch <= 1e-8
    assert 0.0 < e.s1 < 1.0


def test_end_ratio_bounded_and_interior_decrease(get_eigenpair):
    ratios, decrease = [], []
    for coefs in WEIGHTS:
        e = get_eigenpair(coefs)
        ratios.append(e.phi[0] / -e.phi[-1])
        inner = (e.xs >= 0.2) & (e.xs <= 0.8)
        decrease.append(np.min(-e.dphi[inner]) / e.phi[0])
    assert np.all(np.array(decrease) > 0.5)
    # the linear weight gives 1 / |J0(j11)| = 2.48; symmetric weights give 1
    assert 1 / 5 <= min(ratios) and max(ratios) <= 5
    assert ratios[1] == pytest.approx(2.4828719346338, rel=1e-10)


@pytest.mark.parametrize("family", ["wedge", "trapezoid", "lens", "polygon"])
def test_end_ratio_stable_in_eps(get_family_eigenpair, family):
    r = [get_family_eigenpair(family, e).phi[0] / -get_family_eigenpair(family, e).phi[-1]
         for e in (0.2, 0.1, 0.05, 0.025)]
    assert max(r) / min(r) < 1 + 1e-9


def test_resampling_converged():
    w = polynomial_weight([1.0, 1.0])
    a = solve_first_eigen(w, grid_size=4097)
    b = solve_first_eigen(w, grid_size=8193)
    assert abs(a.mu - b.mu) < 1e-10 and abs(a.s1 - b.s1) < 1e-10
    np.testing.assert_allclose(b.phi[::2], a.phi, atol=1e-12)


def test_evaluate_matches_grid(get_eigenpair):
    e = get_eigenpair(AFFINE)
    phi, dphi = e.evaluate(e.xs[::64])
    np.testing.assert_allclose(phi, e.phi[::64], atol=1e-13)
    np.testing.assert_allclose(dphi, e.dphi[::64], atol=1e-11)


def test_scale_invariance():
    a = solve_first_eigen(polynomial_weight([1.0, 1.0]))
    b = solve_first_eigen(polynomial_weight([1.0, 1.0]).scaled(0.05))
    assert a.mu == b.mu and a.s1 == b.s1


def test_callable_weight_path(get_eigenpair):
    e = solve_first_eigen(callable_weight(lambda x: 1.0 + x))
    assert e.mu == pytest.approx(get_eigenpair(AFFINE).mu, rel=1e-10)


def test_tol_mu_bound():
    with pytest.raises(ValueError):
        solve_first_eigen(polynomial_weight([1.0]), tol_mu=1e-14)


def test_pure_python_backend_agrees(get_eigenpair):
    code = ("from thinodal import _kernels; from thinodal.geometry import polynomial_weight;"
            "from thinodal.sl_solver import solve_first_eigen;"
            "print(_kernels.BACKEND, repr(solve_first_eigen(polynomial_weight([0.0, 1.0])).mu))")
    env = dict(os.environ, THINODAL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out[0] == "python"
    assert float(out[1]) == pytest.approx(get_eigenpair(LINEAR).mu, rel=1e-13)


# --- Rayleigh quotient -------------------------------------------------------

X = np.linspace(0.0, 1.0, 4097)


def test_rayleigh_cosine():
    w = polynomial_weight([1.0])
    assert rayleigh_quotient_1d(w, X, np.cos(math.pi * X)) == pytest.approx(math.pi ** 2,
                                                                            rel=1e-9)


def test_rayleigh_linear():
    w = polynomial_weight([1.0])
    q = rayleigh_quotient_1d(w, X, X - 0.5, np.ones_like(X))
    assert q == pytest.approx(12.0, rel=1e-12)
    assert q >= math.pi ** 2


def test_rayleigh_mean_adjustment():
    w = polynomial_weight([1.0])
    assert rayleigh_quotient_1d(w, X, X + 3.0, np.ones_like(X)) == pytest.approx(12.0, rel=1e-12)


def test_rayleigh_constant_rejected():
    with pytest.raises(ZeroDivisionError):
        rayleigh_quotient_1d(polynomial_weight([1.0]), X, np.ones_like(X), np.zeros_like(X))


@settings(max_examples=15, deadline=None)
@given(c=st.lists(st.floats(-1, 1), min_size=2, max_size=5))
def test_rayleigh_variational(get_eigenpair, c):
    # every trial function has quotient at least mu
    w = polynomial_weight(list(AFFINE))
    f = sum(ck * np.cos((k + 1) * math.pi * X) for k, ck in enumerate(c)) + 0.3 * X ** 3
    if np.ptp(f) < 1e-3:
        return
    assert rayleigh_quotient_1d(w, X, f) >= get_eigenpair(AFFINE).mu * (1 - 1e-9)


def test_weighted_integral_kinked_weight():
    # omega = 1 + |x - 0.3| style kink off the grid: exact for polynomials on each piece
    from thinodal.geometry import PiecewisePolynomial, _weight_from_pieces
    p = PiecewisePolynomial.linear_interp((0.0, 0.3, 1.0), (1.3, 1.0, 1.7))
    w = _weight_from_pieces(p, 2, "kink")
    xs = np.linspace(0, 1, 101)
    exact = 0.5 * 0.3 * (1.3 + 1.0) + 0.5 * 0.7 * (1.0 + 1.7)
    assert weighted_integral(w, xs, np.ones_like(xs)) == pytest.approx(exact, rel=1e-14)
    # int omega x^2 on each piece, omega linear: polynomial of degree 3
    g = lambda a, b, wa, wb: (wa * (b ** 3 - a ** 3) / 3 + (wb - wa) / (b - a) * (
        (b ** 4 - a ** 4) / 4 - a * (b ** 3 - a ** 3) / 3))
    exact2 = g(0.0, 0.3, 1.3, 1.0) + g(0.3, 1.0, 1.0, 1.7)
    assert weighted_integral(w, xs, xs, xs) == pytest.approx(exact2, rel=1e-13)
