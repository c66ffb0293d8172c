"""Paired 1D/2D solves across width grids, bound diagnostics and slope fits.

Each row solves the Sturm-Liouville problem for the width profile and the
Neumann problem on the domain itself at ``(nx, ny)`` and ``(2 nx, 2 ny)``.
The companion solve supplies the discretization bound ``tol_disc`` and
Richardson-extrapolated ``lambda`` and ``ubar``.  Everything else comes from
the requested mesh.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import make_domain, width_profile
from .laplace2d import (auto_resolution, build_mesh, cross_section_average, eta_profile,
                        energy_check, gradient_diagnostics, nodal_set, profile_ratios,
                        solve_first_neumann, transverse_oscillation)
from .sl_solver import solve_first_eigen

__all__ = [
    "FloorError",
    "ScalingRow",
    "SlopeFit",
    "ScalingReport",
    "SandwichResult",
    "CSV_COLUMNS",
    "SLOPE_QUANTITIES",
    "STABILITY_QUANTITIES",
    "FLOORS",
    "C_CAP",
    "one_sided_limit",
    "profile_difference",
    "run_pair",
    "scaling_study",
    "fit_slope",
    "sandwich_check",
    "stability",
]

CSV_COLUMNS = ("eps", "lambda", "mu", "gap", "sup_diff", "width", "dist_s1", "eta_ratio",
               "grad_ratio", "dy_ratio", "supinf_ratio", "energy_gap", "mesh_tag")
SLOPE_QUANTITIES = ("gap", "sup_diff", "width", "dist_s1", "oscillation")
# normalized bound ratios expected to stay bounded as eps shrinks
STABILITY_QUANTITIES = ("grad_ratio", "dy_ratio", "eta_ratio", "supinf_ratio", "sup_l2",
                        "energy_ratio", "interior_decrease", "lipschitz")

SLOPE_FLOOR = 1e-11
# 10x the rectangle null-case values at the default resolution
FLOORS = {"gap": 1e-8, "sup_diff": 1e-10, "width": 1e-10, "dist_s1": 1e-10,
          "oscillation": 1e-10}
# recorded caps on (mu - lambda) / eps, several times the largest observed value
C_CAP = {"rectangle": 0.1, "wedge": 1.0, "trapezoid": 0.5, "lens": 2.0, "polygon": 2.0}
EIGEN_WINDOW = (1.0, 100.0)
LIMIT_COLUMNS, LIMIT_DEGREE = 16, 3


class FloorError(ValueError):
    """Every point of a slope fit sits at the numerical floor."""


@dataclass(frozen=True)
class ScalingRow:
    eps: float
    lam: float
    mu: float
    gap: float
    sup_diff: float
    width: float
    dist_s1: float
    eta_ratio: float
    grad_ratio: float
    dy_ratio: float
    supinf_ratio: float
    energy_gap: float
    mesh_tag: str
    tol_disc: float = 0.0
    family: str = ""
    s1: float = float("nan")
    s0: float = float("nan")
    s0_prime: float = float("nan")
    diagnostics: dict = field(default_factory=dict, compare=False)

    def get(self, name: str) -> float:
        if name in self.diagnostics:
            return self.diagnostics[name]
        return getattr(self, "lam" if name == "lambda" else name)

    def csv_values(self) -> tuple:
        return tuple(self.get(c) for c in CSV_COLUMNS)

    @property
    def triangle_ok(self) -> bool:
        """Row roots span at most twice their distance to ``s1`` plus the ubar-root spread."""
        return self.width <= 2 * self.dist_s1 + abs(self.s0_prime - self.s0) + 1e-15


def one_sided_limit(xs: np.ndarray, ubar: np.ndarray, degenerate: bool) -> float:
    """``ubar(0+)``: the column average, or a polynomial-in-x^2 limit at a degenerate end.

    The nodal value at a collapsed column converges more slowly than the
    neighbouring column averages, so the limit is taken from the latter.
    """
    if not degenerate:
        return float(ubar[0])
    k = LIMIT_COLUMNS
    c = np.polyfit(xs[1:k + 1] ** 2, ubar[1:k + 1], LIMIT_DEGREE)
    return float(np.polyval(c, 0.0))


def profile_difference(pair, sol, fine=None, prof=None) -> tuple[float, float, np.ndarray]:
    """``sup |ubar - phi| / sup |ubar|`` with ``phi`` scaled so that ``phi(0) = ubar(0+)``.

    With a doubled-resolution ``fine`` solve, ``ubar`` is Richardson
    extrapolated on the coarse columns.  Returns ``(sup_diff, ubar(0+), phi)``.
    """
    prof = cross_section_average(sol) if prof is None else prof
    xs = prof.xs
    ubar = prof.ubar
    if fine is not None:
        ubar = (4 * cross_section_average(fine).ubar[::2] - prof.ubar) / 3
    deg0 = bool(sol.mesh.degenerate[0])
    u0 = one_sided_limit(xs, ubar, deg0)
    if deg0:
        ubar = ubar.copy()
        ubar[0] = u0
    phi, _ = pair.evaluate(xs)
    phi = phi * u0
    sup_ubar = float(np.max(np.abs(ubar)))
    return float(np.max(np.abs(ubar - phi)) / sup_ubar), u0, phi


def _mesh_tag(nx: int, ny: int) -> str:
    return f"nx{nx}-ny{ny}"


def run_pair(family: str, eps: float, nx="auto", ny="auto", tol: float = 1e-10,
             params: Optional[dict] = None) -> ScalingRow:
    """One row of diagnostics for ``family`` at width ``eps``."""
    if not 0.01 <= eps <= 0.25:
        raise ValueError("eps must lie in [0.01, 0.25]")
    nx, ny = auto_resolution(eps, nx, ny)
    dom = make_domain(family, eps, params)
    pair = solve_first_eigen(width_profile(dom))
    sol = solve_first_neumann(build_mesh(dom, nx, ny), tol)
    fine = solve_first_neumann(build_mesh(dom, 2 * nx, 2 * ny), tol)
    tol_disc = abs(sol.lam - fine.lam)
    lam = (4 * fine.lam - sol.lam) / 3

    prof = cross_section_average(sol)
    xs = prof.xs
    deg0 = bool(sol.mesh.degenerate[0])
    sup_diff, u0, phi = profile_difference(pair, sol, fine, prof)

    nodal = nodal_set(sol, prof)
    grads = gradient_diagnostics(sol, prof)
    osc, _ = transverse_oscillation(sol, prof)
    ratios = profile_ratios(sol, prof)
    energy_gap = energy_check(prof, sol.lam, eps) - sol.lam
    etas = eta_profile(prof, sol.lam)
    dist_s1 = float(np.max(np.abs(nodal.row_roots[:, 1] - pair.s1)))
    sup_phi = float(np.max(np.abs(phi)))
    u0_raw = one_sided_limit(xs, prof.ubar, deg0)

    diagnostics = {
        "oscillation": osc,
        "sup_l2": ratios["sup_l2"],
        "energy_ratio": energy_gap / eps,
        "interior_decrease": ratios["interior_decrease"],
        "lipschitz": ratios["lipschitz"],
        "eta_over_omega": ratios["eta_over_omega"],
        "eta_ratio_phi": ratios["eta_ratio"] * float(np.max(np.abs(prof.ubar))) / (
            sup_phi * abs(u0_raw / u0)),
        "ubar0_over_sup": u0_raw / sol.sup_u,
        "dy_boundary": grads.r_dy_boundary,
        "dy_interior": grads.r_dy_interior,
        "mean_u": sol.integral_u / sol.integral_abs_u,
        "mean_omega_ubar": prof.mean_defect,
        "eta_identity_residual": etas.max_residual,
        "lambda_coarse": sol.lam,
        "lambda_fine": fine.lam,
        "tol_disc": tol_disc,
        "proj_min": nodal.proj_min,
        "proj_max": nodal.proj_max,
        "s1": pair.s1,
        "s0": nodal.s0,
        "s0_prime": nodal.s0_prime,
    }
    return ScalingRow(float(eps), float(lam), pair.mu, pair.mu - lam, sup_diff, nodal.width,
                      dist_s1, ratios["eta_ratio"], grads.r_grad, grads.r_dy,
                      ratios["supinf_ratio"], float(energy_gap), _mesh_tag(nx, ny), tol_disc,
                      family, pair.s1, nodal.s0, nodal.s0_prime, diagnostics)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n_used: int
    n_floor: int = 0


def fit_slope(points: Sequence[tuple], floor: float = SLOPE_FLOOR) -> SlopeFit:
    """Least squares in ``(log eps, log value)``, dropping points at or below ``floor``."""
    pts = [(float(e), float(v)) for e, v in points]
    used = [(e, v) for e, v in pts if v > floor]
    n_floor = len(pts) - len(used)
    if pts and not used:
        raise FloorError("all points at the numerical floor")
    if len(used) < 2:
        raise ValueError("need at least two points above the floor")
    x = np.log([e for e, _ in used])
    y = np.log([v for _, v in used])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, intercept])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2, len(used), n_floor)


def stability(rows: Sequence[ScalingRow], names: Sequence[str] = STABILITY_QUANTITIES) -> dict:
    """``max / min`` of each ratio across rows; infinite if it changes sign or vanishes."""
    out = {}
    for name in names:
        v = np.array([r.get(name) for r in rows], dtype=float)
        if np.all(v > 0) or np.all(v < 0):
            a = np.abs(v)
            out[name] = float(a.max() / a.min())
        else:
            out[name] = math.inf
    return out


@dataclass(frozen=True)
class ScalingReport:
    family: str
    rows: list
    slopes: dict                    # quantity -> SlopeFit, or a status string
    refinement_deltas: dict = field(default_factory=dict)
    slope_deltas: dict = field(default_factory=dict)
    refined_row: Optional[ScalingRow] = None
    stability: dict = field(default_factory=dict)
    flagged: bool = False

    def slope(self, name: str) -> Optional[SlopeFit]:
        s = self.slopes.get(name)
        return s if isinstance(s, SlopeFit) else None

    def summary(self) -> dict:
        def fit(s):
            return asdict(s) if isinstance(s, SlopeFit) else {"status": s}
        return {
            "family": self.family,
            "eps": [r.eps for r in self.rows],
            "slopes": {k: fit(v) for k, v in self.slopes.items()},
            "refinement_deltas": self.refinement_deltas,
            "slope_deltas": self.slope_deltas,
            "stability": self.stability,
            "flagged": self.flagged,
        }


def _fit_all(rows: Sequence[ScalingRow]) -> dict:
    slopes = {}
    for q in SLOPE_QUANTITIES:
        pts = [(r.eps, r.get(q)) for r in rows if r.get(q) > FLOORS[q]]
        if not pts:
            slopes[q] = "floor"
        elif len(pts) < 4:
            slopes[q] = "insufficient"
        else:
            slopes[q] = fit_slope(pts)
    return slopes


def _row_job(args):
    return run_pair(*args)


def scaling_study(family: str, eps_list: Sequence[float], nx="auto", ny="auto",
                  tol: float = 1e-10, jobs: Optional[int] = 1, refine: bool = True,
                  params: Optional[dict] = None) -> ScalingReport:
    """Rows for every ``eps``, slope fits, and a doubled-resolution rerun of the smallest."""
    eps_sorted = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps_sorted) < 4:
        raise ValueError("need at least four widths")
    jobs = (os.cpu_count() or 1) if jobs is None else jobs
    args = [(family, e, nx, ny, tol, params) for e in eps_sorted]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
            rows = list(pool.map(_row_job, args))
    else:
        rows = [_row_job(a) for a in args]
    slopes = _fit_all(rows)
    # floor means the quantity vanishes to rounding; only too few usable points is a flag
    flagged = any(s == "insufficient" for s in slopes.values())

    deltas, slope_deltas, refined = {}, {}, None
    if refine:
        e = eps_sorted[-1]
        bx, by = auto_resolution(e, nx, ny)
        refined = run_pair(family, e, 2 * bx, 2 * by, tol, params)
        base = rows[-1]
        for q in ("lambda", "mu") + SLOPE_QUANTITIES:
            a, b = base.get(q), refined.get(q)
            deltas[q] = abs(b - a) / abs(a) if a != 0 else abs(b - a)
        re_slopes = _fit_all(rows[:-1] + [refined])
        for q, s in slopes.items():
            t = re_slopes[q]
            if isinstance(s, SlopeFit) and isinstance(t, SlopeFit):
                slope_deltas[q] = abs(t.slope - s.slope)
    return ScalingReport(family, rows, slopes, deltas, slope_deltas, refined, stability(rows),
                         flagged)


@dataclass(frozen=True)
class SandwichResult:
    passed: bool
    flags: tuple
    margins: dict


def sandwich_check(row: ScalingRow, tol_disc: Optional[float] = None,
                   c_cap: Optional[float] = None) -> SandwichResult:
    """``lambda <= mu + tol`` and ``mu <= lambda + C eps + tol``, both inside ``[1, 100]``."""
    tol = row.tol_disc if tol_disc is None else tol_disc
    cap = C_CAP.get(row.family, 1.0) if c_cap is None else c_cap
    lower = row.mu + tol - row.lam
    upper = row.lam + cap * row.eps + tol - row.mu
    flags = []
    if lower < 0:
        flags.append("variational violation")
    if upper < 0:
        flags.append("gap above cap")
    lo, hi = EIGEN_WINDOW
    if not (lo <= row.lam <= hi and lo <= row.mu <= hi):
        flags.append("eigenvalue window")
    return SandwichResult(not flags, tuple(flags), {"lower": lower, "upper": upper})


def with_scaled_solution(row: ScalingRow, **changes) -> ScalingRow:
    """Copy of ``row`` with fields replaced (used to build synthetic rows)."""
    return replace(row, **changes)
