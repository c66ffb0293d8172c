"""First nonzero Neumann eigenpair of ``-(omega phi')' = mu omega phi`` on [0, 1].

Endpoints where ``omega`` vanishes are handled by a local Picard iteration
on a small patch, after which the flux system ``(phi, omega phi')`` is shot
across the interior with an adaptive Dormand-Prince 5(4) method.  The
eigenvalue is the ``mu`` at which the first zero of the left-started
solution meets the last zero of the right-started one.  The right side is
always solved on the reflected weight ``omega(1 - x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import simpson
from scipy.optimize import brentq

from . import _kernels
from .geometry import InvalidWeightError, WeightProfile

__all__ = [
    "ShootingError",
    "PicardPatch",
    "ShotSolution",
    "ShootResult",
    "SLEigenpair",
    "picard_local",
    "patch_radius",
    "shoot",
    "s1_of_mu",
    "solve_first_eigen",
    "rayleigh_quotient_1d",
    "weighted_integral",
]

RTOL = ATOL = 1e-12
ZERO_TOL = 1e-13
PICARD_TOL = 1e-14
PICARD_MAXITER = 200
PICARD_NODES = 40
MU_START, MU_MAX = 4.0, 1e6
GLUE_TOL = 1e-8

# Dormand-Prince dense output: y(x0 + t h) = y0 + h * K.T @ DENSE @ [t, t^2, t^3, t^4]
DENSE = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class ShootingError(RuntimeError):
    """Integration or eigenvalue matching failed."""


# --- Picard patch -----------------------------------------------------------

@lru_cache(maxsize=None)
def _cheb_setup(n: int):
    s = -np.cos(np.pi * np.arange(n) / (n - 1))          # Lobatto nodes on [-1, 1], ascending
    t = 0.5 * (1.0 + s)                                   # on [0, 1]
    V = C.chebvander(s, n - 1)
    Vint = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        Vint[:, j] = C.chebval(s, C.chebint(e, lbnd=-1))
    Q = 0.5 * Vint @ np.linalg.inv(V)                     # cumulative integral from 0, unit patch
    bw = np.ones(n)
    bw[1::2] = -1.0
    bw[[0, -1]] *= 0.5
    g, gw = np.polynomial.legendre.leggauss(n)
    return t, Q, bw, 0.5 * (g + 1.0), 0.5 * gw


def _bary_matrix(nodes: np.ndarray, weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rows evaluate the interpolant through ``nodes`` at each ``x``."""
    d = x[:, None] - nodes[None, :]
    exact = d == 0.0
    d[exact] = 1.0
    r = weights[None, :] / d
    L = r / r.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        L[hit] = exact[hit].astype(float)
    return L


@dataclass(frozen=True)
class PicardPatch:
    """Fixed point of the Picard iteration on ``[0, delta]`` (local coordinates)."""

    delta: float
    nodes: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    iterations: int

    def evaluate(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        _, _, bw, _, _ = _cheb_setup(len(self.nodes))
        L = _bary_matrix(self.nodes, bw, x)
        return L @ self.phi, L @ self.dphi


def patch_radius(w: WeightProfile, mu: float) -> float:
    """Patch length ``min(delta_monotone, first break, 1 / (2 sqrt(max(mu, 1))))``.

    The last term keeps the contraction factor ``mu * delta**2`` at most 1/4.
    """
    return min(w.monotone_radius(), w.first_break(), 0.5 / math.sqrt(max(mu, 1.0)))


def picard_local(w: WeightProfile, mu: float, from_left: bool = True, phi0: float = 1.0,
                 delta: Optional[float] = None) -> PicardPatch:
    """Solve ``phi = phi0 + int_0^x phi_1``, ``phi_1 = -(1/omega) int_0^x mu omega phi``.

    Iterates from ``phi = phi0, phi_1 = 0`` until successive sup-differences
    fall below 1e-14.  With ``from_left=False`` the patch is computed for the
    reflected weight, i.e. it describes ``phi(1 - x)``.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if not from_left:
        w = w.reflected()
    if delta is None:
        delta = patch_radius(w, mu)
    if not delta > 0:
        raise InvalidWeightError("no admissible Picard patch at the endpoint")
    t_unit, Q_unit, bw, tau, gw = _cheb_setup(PICARD_NODES)
    t = delta * t_unit
    om = np.asarray(w.omega(t), dtype=float)
    if np.any(om[1:] <= 0):
        raise InvalidWeightError("weight not positive on the Picard patch")
    Q = delta * Q_unit
    # phi_1(t_k) = -mu t_k int_0^1 omega(t_k tau) / omega(t_k) phi(t_k tau) dtau
    A = np.zeros((len(t), len(t)))
    for k in range(1, len(t)):
        xq = t[k] * tau
        ratio = np.asarray(w.omega(xq), dtype=float) / om[k]
        A[k] = -mu * t[k] * (gw * ratio) @ _bary_matrix(t, bw, xq)
    phi = np.full(len(t), float(phi0))
    phi1 = np.zeros(len(t))
    for it in range(1, PICARD_MAXITER + 1):
        new_phi = phi0 + Q @ phi1
        new_phi1 = A @ phi
        diff = max(np.max(np.abs(new_phi - phi)), np.max(np.abs(new_phi1 - phi1)))
        phi, phi1 = new_phi, new_phi1
        if diff < PICARD_TOL:
            return PicardPatch(delta, t, phi, phi1, it)
    raise InvalidWeightError("Picard iteration did not contract; weight is not admissible")


# --- shooting ---------------------------------------------------------------

@dataclass(frozen=True)
class ShotSolution:
    """Dense solution of one shot in local coordinates (``x`` measured from the start end)."""

    mu: float
    reflected: bool
    patch: PicardPatch
    omega: object
    xs: np.ndarray
    ys: np.ndarray
    ks: np.ndarray
    status: int

    @property
    def x_stop(self) -> float:
        return float(self.xs[-1])

    def evaluate_local(self, x):
        """``(phi, phi')`` at local coordinates ``x`` in ``[0, x_stop]``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        phi = np.empty_like(x)
        dphi = np.empty_like(x)
        inpatch = x <= self.patch.delta
        if inpatch.any():
            phi[inpatch], dphi[inpatch] = self.patch.evaluate(x[inpatch])
        rest = ~inpatch
        if rest.any():
            xr = x[rest]
            i = np.clip(np.searchsorted(self.xs, xr, side="right") - 1, 0, len(self.ks) - 1)
            h = self.xs[i + 1] - self.xs[i]
            th = (xr - self.xs[i]) / h
            powers = np.stack([th, th ** 2, th ** 3, th ** 4], axis=1)
            coef = np.einsum("nsc,sp->ncp", self.ks[i], DENSE)
            y = self.ys[i] + h[:, None] * np.einsum("ncp,np->nc", coef, powers)
            phi[rest] = y[:, 0]
            dphi[rest] = y[:, 1] / np.asarray(self.omega(xr), dtype=float)
        return phi, dphi

    def evaluate(self, x):
        """``(phi, phi')`` in global coordinates."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.reflected:
            return self.evaluate_local(x)
        phi, dphi = self.evaluate_local(1.0 - x)
        return phi, -dphi

    def first_zero_local(self) -> Optional[float]:
        """Smallest sign change of ``phi``, bisected on the dense interpolant."""
        p = self.ys[:, 0]
        sign_change = np.nonzero((p[:-1] > 0) & (p[1:] <= 0))[0]
        if len(sign_change) == 0:
            return None
        i = int(sign_change[0])
        if p[i + 1] == 0.0:
            return float(self.xs[i + 1])
        lo, hi = float(self.xs[i]), float(self.xs[i + 1])
        coef = self.ks[i].T @ DENSE
        h = hi - lo
        a, b = 0.0, 1.0
        while (b - a) * h > ZERO_TOL:
            m = 0.5 * (a + b)
            val = self.ys[i, 0] + h * (coef[0] @ np.array([m, m * m, m ** 3, m ** 4]))
            if val > 0:
                a = m
            else:
                b = m
        return lo + 0.5 * (a + b) * h


@dataclass(frozen=True)
class ShootResult:
    mu: float
    side: str
    phi_end: float
    s_zero: Optional[float]
    samples: np.ndarray
    solution: ShotSolution = field(repr=False)


def _integrate(w: WeightProfile, mu, x0, phi0, flux0, x_end, step, stop_at_zero):
    if w.pieces is not None:
        return _kernels.integrate(w.pieces.breaks, w.pieces.coefs, float(mu), x0, phi0, flux0,
                                  x_end, RTOL, ATOL, step, stop_at_zero)
    return _kernels.python_integrate(None, None, float(mu), x0, phi0, flux0, x_end, RTOL, ATOL,
                                     step, stop_at_zero, omega=lambda x: float(w.omega(x)))


def _shoot_local(w: WeightProfile, mu: float, step: float, stop_at_zero: bool,
                 x_stop: Optional[float] = None) -> ShotSolution:
    """Shoot from x = 0 of ``w`` (already normalized and oriented)."""
    patch = picard_local(w, mu)
    x_end = 1.0 - patch_radius(w.reflected(), mu) if w.singular_right else 1.0
    if x_stop is not None:
        x_end = min(x_end, x_stop)
    d = patch.delta
    phi0 = float(patch.phi[-1])
    flux0 = float(w.omega(d)) * float(patch.dphi[-1])
    xs, ys, ks, _, status = _integrate(w, mu, d, phi0, flux0, x_end, step, stop_at_zero)
    if status == _kernels.STATUS_NONFINITE:
        raise ShootingError(f"non-finite solution while shooting at mu={mu}")
    if status not in (_kernels.STATUS_END, _kernels.STATUS_ZERO):
        raise ShootingError(f"integration failed (status {status}) at mu={mu}")
    return ShotSolution(float(mu), False, patch, w.omega, xs, ys, ks, status)


def shoot(w: WeightProfile, mu: float, side: str = "left", step: float = 1e-3,
          stop_at_zero: bool = False, x_stop: Optional[float] = None) -> ShootResult:
    """Shoot from one end with ``phi = 1, phi' = 0`` there.

    ``s_zero`` is the smallest zero for ``side="left"`` and the largest zero
    for ``side="right"`` (global coordinates).  ``x_stop`` bounds the
    integration length measured from the starting end.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not 0 < step <= 1e-3:
        raise ValueError("step must lie in (0, 1e-3]")
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    wn = w.normalized()
    if side == "right":
        wn = wn.reflected()
    sol = _shoot_local(wn, mu, step, stop_at_zero, x_stop)
    z = sol.first_zero_local()
    if side == "right":
        sol = ShotSolution(sol.mu, True, sol.patch, sol.omega, sol.xs, sol.ys, sol.ks, sol.status)
        z = None if z is None else 1.0 - z
    xloc = np.concatenate([sol.patch.nodes, sol.xs[1:]])
    phi, dphi = sol.evaluate_local(xloc)
    xg = xloc if side == "left" else 1.0 - xloc
    if side == "right":
        dphi = -dphi
    samples = np.column_stack([xg, phi, dphi])
    return ShootResult(float(mu), side, float(sol.ys[-1, 0]), z, samples, sol)


def s1_of_mu(w: WeightProfile, mu: float, step: float = 1e-3) -> Optional[float]:
    """First zero of the left-started solution, or ``None`` if it stays positive."""
    return shoot(w, mu, "left", step, stop_at_zero=True).s_zero


# --- eigenpair ---------------------------------------------------------------

@dataclass(frozen=True)
class SLEigenpair:
    mu: float
    xs: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    s1: float
    norm_value: float
    weight: WeightProfile = field(repr=False)
    left: ShotSolution = field(repr=False)
    right: ShotSolution = field(repr=False)
    right_scale: float = 1.0
    glue_mismatch: float = 0.0
    match_residual: float = 0.0

    def evaluate(self, x):
        """``(phi, phi')`` at arbitrary points, from the glued dense solutions."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        phi = np.empty_like(x)
        dphi = np.empty_like(x)
        lft = x <= self.s1
        if lft.any():
            phi[lft], dphi[lft] = self.left.evaluate(x[lft])
        if (~lft).any():
            p, d = self.right.evaluate(x[~lft])
            phi[~lft], dphi[~lft] = self.right_scale * p, self.right_scale * d
        return self.norm_value * phi, self.norm_value * dphi

    def scaled_to(self, value_at_zero: float) -> "SLEigenpair":
        """Copy normalized so that ``phi(0) = value_at_zero``."""
        f = value_at_zero / self.norm_value
        return SLEigenpair(self.mu, self.xs, self.phi * f, self.dphi * f, self.s1,
                           value_at_zero, self.weight, self.left, self.right, self.right_scale,
                           self.glue_mismatch, self.match_residual)


def _match(wn: WeightProfile, wr: WeightProfile, mu: float, step: float) -> float:
    # s1 decreases and the reflected-side zero increases in mu; a missing zero
    # means mu is still below the eigenvalue
    sl = _shoot_local(wn, mu, step, True).first_zero_local()
    if sl is None:
        return 1.0
    sr = _shoot_local(wr, mu, step, True).first_zero_local()
    if sr is None:
        return 1.0
    return sl - (1.0 - sr)


def solve_first_eigen(w: WeightProfile, tol_mu: float = 1e-12, step: float = 1e-3,
                      grid_size: int = 4097) -> SLEigenpair:
    """First nonzero Neumann eigenpair, normalized to ``phi(0) = 1``.

    The eigenvalue is bracketed by doubling from 4, located by Brent's method
    on the zero-matching function, and the two shots are glued at the common
    zero after scaling the right one to match the derivative there.
    """
    if tol_mu < 1e-12:
        raise ValueError("tol_mu must be at least 1e-12")
    wn = w.normalized()
    wr = wn.reflected()

    def m(mu):
        return _match(wn, wr, mu, step)

    mu = MU_START
    val = m(mu)
    if val > 0:
        lo = mu
        while val > 0:
            lo = mu
            mu *= 2.0
            if mu > MU_MAX:
                raise ShootingError("no eigenvalue bracket below 1e6; weight is not admissible")
            val = m(mu)
        hi = mu
    else:
        hi = mu
        while val <= 0:
            if val == 0:
                break
            hi = mu
            mu *= 0.5
            if mu < 1e-3:
                raise ShootingError("no eigenvalue bracket above 1e-3")
            val = m(mu)
        lo = mu
    if val == 0:
        mu_star = mu
    else:
        mu_star = brentq(m, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    residual = m(mu_star)
    if abs(residual) >= max(tol_mu, 1e-12) * 10:
        # Brent stops on the mu bracket; polish with plain bisection on |m|
        a, b = lo, hi
        for _ in range(200):
            mid = 0.5 * (a + b)
            r = m(mid)
            if abs(r) < tol_mu or b - a < 4e-16 * mid:
                mu_star, residual = mid, r
                break
            if r > 0:
                a = mid
            else:
                b = mid
    if abs(residual) >= tol_mu and abs(residual) > 1e-12:
        raise ShootingError(f"zero matching stalled at |m| = {abs(residual):.3e}")

    left0 = _shoot_local(wn, mu_star, step, True)
    s1 = left0.first_zero_local()
    right0 = _shoot_local(wr, mu_star, step, True)
    sr = 1.0 - right0.first_zero_local()
    margin = 0.02
    left = _shoot_local(wn, mu_star, step, False, x_stop=s1 + margin)
    rloc = _shoot_local(wr, mu_star, step, False, x_stop=1.0 - sr + margin)
    right = ShotSolution(rloc.mu, True, rloc.patch, rloc.omega, rloc.xs, rloc.ys, rloc.ks,
                         rloc.status)
    _, dl = left.evaluate(np.array([s1]))
    _, dr = right.evaluate(np.array([s1]))
    if not (dl[0] < 0 and dr[0] > 0):
        raise ShootingError("glued solutions do not both decrease through the zero")
    c = float(dl[0] / dr[0])

    lo_w = max(s1 - 0.01, 1.0 - right.x_stop)
    hi_w = min(s1 + 0.01, left.x_stop)
    xw = np.linspace(lo_w, hi_w, 21)
    pl, _ = left.evaluate(xw)
    pr, _ = right.evaluate(xw)
    mismatch = float(np.max(np.abs(pl - c * pr)) / np.max(np.abs(pl)))
    if mismatch > GLUE_TOL:
        raise ShootingError(f"glued solutions disagree near the zero (relative {mismatch:.2e})")

    xs = np.linspace(0.0, 1.0, grid_size)
    pair = SLEigenpair(float(mu_star), xs, np.empty(0), np.empty(0), float(s1), 1.0, w, left,
                       right, c, mismatch, float(residual))
    phi, dphi = pair.evaluate(xs)
    return SLEigenpair(float(mu_star), xs, phi, dphi, float(s1), 1.0, w, left, right, c,
                       mismatch, float(residual))


def _piece_samples(xs: np.ndarray, vals: Sequence[np.ndarray], a: float, b: float):
    """Nodes of ``[a, b]`` plus its ends, with one-sided cubic values at off-grid ends."""
    tol = 1e-12
    inside = (xs >= a - tol) & (xs <= b + tol)
    x = xs[inside]
    out = [v[inside] for v in vals]
    for end, at_start in ((a, True), (b, False)):
        if np.min(np.abs(x - end)) <= tol:
            continue
        k = min(4, len(x))
        sl = slice(0, k) if at_start else slice(len(x) - k, len(x))
        ext = [np.polyval(np.polyfit(x[sl] - end, v[sl], k - 1), 0.0) for v in out]
        x = np.concatenate([[end], x]) if at_start else np.concatenate([x, [end]])
        out = [np.concatenate([[e], v]) if at_start else np.concatenate([v, [e]])
               for e, v in zip(ext, out)]
    return x, out


def weighted_integral(w: WeightProfile, xs: np.ndarray, *factors: np.ndarray) -> float:
    """``int_0^1 omega * prod(factors)`` by composite Simpson split at the weight's breakpoints.

    Samples are on ``xs``; a breakpoint between nodes gets one-sided cubic
    values so that each piece sees a smooth integrand.
    """
    xs = np.asarray(xs, dtype=float)
    factors = [np.asarray(f, dtype=float) for f in factors]
    breaks = [0.0, 1.0] if w.pieces is None else [float(b) for b in w.pieces.breaks]
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, vals = _piece_samples(xs, factors, a, b)
        g = np.asarray(w.omega(x), dtype=float)
        for v in vals:
            g = g * v
        total += float(simpson(g, x=x))
    return total


def rayleigh_quotient_1d(w: WeightProfile, xs: np.ndarray, f: np.ndarray,
                         df: Optional[np.ndarray] = None) -> float:
    """``int omega (f_perp')^2 / int omega f_perp^2`` with ``f_perp`` omega-mean free.

    Composite Simpson on ``xs``, split at the breakpoints of piecewise
    weights.  Without ``df`` the derivative comes from a cubic spline
    through ``f``.
    """
    xs = np.asarray(xs, dtype=float)
    f = np.asarray(f, dtype=float)
    if df is None:
        from scipy.interpolate import CubicSpline
        df = CubicSpline(xs, f).derivative()(xs)
    one = np.ones_like(xs)
    f_perp = f - weighted_integral(w, xs, f) / weighted_integral(w, xs, one)
    den = weighted_integral(w, xs, f_perp, f_perp)
    if not den > 0:
        raise ZeroDivisionError("test function is omega-almost-everywhere constant")
    df = np.asarray(df, dtype=float)
    return float(weighted_integral(w, xs, df, df) / den)
