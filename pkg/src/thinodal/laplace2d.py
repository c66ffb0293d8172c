"""P1 finite elements for the first nonzero Neumann eigenpair of a graph domain.

The mesh is a mapped logical grid: column ``i`` sits at ``x_i = i / nx`` and
row ``j`` at ``g_bot + (j / ny) * width``.  The reported triangulation splits
quads along alternating diagonals (``(i + j) % 2``).  Assembly averages both
diagonal splits of every quad, so each cell matrix is symmetric under
reflection and y-independent modes on rectangles stay exactly y-independent.
Columns of zero width collapse to one node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import simpson

from .geometry import DomainError, Domain2D

__all__ = [
    "ConvergenceError",
    "Mesh",
    "PDESolution",
    "CrossSectionProfile",
    "EtaProfile",
    "NodalReport",
    "GradientReport",
    "auto_resolution",
    "build_mesh",
    "assemble",
    "solve_first_neumann",
    "cross_section_average",
    "eta_profile",
    "nodal_set",
    "gradient_diagnostics",
    "transverse_oscillation",
    "energy_check",
    "profile_ratios",
]

DEGENERATE_WIDTH = 1e-14
SHIFT = 1e-8
EPS_MAX = 0.25


class ConvergenceError(RuntimeError):
    """Inverse iteration did not reach the requested residual."""


def auto_resolution(eps: float, nx="auto", ny="auto") -> tuple[int, int]:
    """Default ``(nx, ny)``: ``nx = 1024`` and ``ny = max(8, ceil(16 eps / 0.25))``."""
    nx = 1024 if nx == "auto" else int(nx)
    ny = max(8, math.ceil(16 * eps / EPS_MAX)) if ny == "auto" else int(ny)
    return nx, ny


@dataclass(frozen=True)
class Mesh:
    domain: Domain2D
    nx: int
    ny: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    index: np.ndarray              # (nx + 1, ny + 1) logical grid -> node id
    xs: np.ndarray
    widths: np.ndarray
    element_column: np.ndarray     # column i of the cell each element came from
    split_elements: np.ndarray     # both diagonal splits of every quad, weight 1/2 each
    split_column: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.widths < DEGENERATE_WIDTH

    def areas(self, elements: Optional[np.ndarray] = None) -> np.ndarray:
        P = self.nodes[self.elements if elements is None else elements]
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_mesh(dom: Domain2D, nx: int, ny: int) -> Mesh:
    """Boundary-fitted triangulation of ``dom`` on an ``nx`` by ``ny`` logical grid."""
    if nx < 2 or ny < 1:
        raise ValueError("need nx >= 2 and ny >= 1")
    xs = np.arange(nx + 1) / nx
    top = np.asarray(dom.g_top(xs), dtype=float) * np.ones(nx + 1)
    bot = np.asarray(dom.g_bot(xs), dtype=float) * np.ones(nx + 1)
    widths = top - bot
    if np.any(widths < -DEGENERATE_WIDTH):
        raise DomainError("ordered_graphs", "lower boundary above upper boundary")
    degenerate = widths < DEGENERATE_WIDTH
    if np.any(degenerate[1:-1]):
        raise DomainError("positive_width", "domain pinches in the interior")
    counts = np.where(degenerate, 1, ny + 1)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    jj = np.arange(ny + 1)
    index = np.where(degenerate[:, None], start[:, None], start[:, None] + jj[None, :])

    t = jj / ny
    X = np.repeat(xs, counts)
    Y = np.concatenate([[bot[i]] if degenerate[i] else bot[i] + t * widths[i]
                        for i in range(nx + 1)])
    nodes = np.column_stack([X, Y])

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    a = index[I, J]
    b = index[I + 1, J]
    c = index[I + 1, J + 1]
    d = index[I, J + 1]
    up = (I + J) % 2 == 0
    t_up = np.stack([np.stack([a, b, c], -1), np.stack([a, c, d], -1)], axis=2)
    t_dn = np.stack([np.stack([a, b, d], -1), np.stack([b, c, d], -1)], axis=2)
    cols = np.broadcast_to(I[..., None], t_up.shape[:3])

    def valid(tri, col):
        tri, col = tri.reshape(-1, 3), col.reshape(-1)
        keep = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
        return tri[keep], col[keep]

    tri, col = valid(np.where(up[..., None, None], t_up, t_dn), cols)
    s_up, c_up = valid(t_up, cols)
    s_dn, c_dn = valid(t_dn, cols)
    split = np.concatenate([s_up, s_dn])
    split_col = np.concatenate([c_up, c_dn])

    boundary = np.zeros(len(nodes), dtype=bool)
    boundary[index[:, 0]] = True
    boundary[index[:, -1]] = True
    boundary[index[0]] = True
    boundary[index[-1]] = True

    mesh = Mesh(dom, nx, ny, nodes, tri, boundary, index, xs, widths, col, split, split_col)
    if np.any(mesh.areas(split) <= 0):
        raise DomainError("element_orientation", "inverted or zero-area element")
    return mesh


def _gradients(mesh: Mesh, elements: Optional[np.ndarray] = None):
    elements = mesh.elements if elements is None else elements
    P = mesh.nodes[elements]
    area = mesh.areas(elements)
    # gradient of barycentric i is the rotated opposite edge over twice the area
    E = np.stack([P[:, 1] - P[:, 2], P[:, 2] - P[:, 0], P[:, 0] - P[:, 1]], axis=1)
    G = np.stack([-E[:, :, 1], E[:, :, 0]], axis=2) / (2 * area[:, None, None])
    return G, area


def assemble(mesh: Mesh):
    """Stiffness and consistent mass matrices (CSC), averaged over both quad splits."""
    G, area = _gradients(mesh, mesh.split_elements)
    area = 0.5 * area
    Ke = np.einsum("mik,mjk->mij", G, G) * area[:, None, None]
    Me = (np.ones((3, 3)) + np.eye(3)) / 12.0 * area[:, None, None]
    t = mesh.split_elements
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = len(mesh.nodes)
    K = sp.csc_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csc_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    return K, M


@dataclass(frozen=True)
class PDESolution:
    mesh: Mesh
    lam: float
    u: np.ndarray
    grad_u: np.ndarray
    sup_u: float
    inf_u: float
    mass_norm: float
    residual: float
    iterations: int
    integral_u: float
    integral_abs_u: float
    M: sp.csc_matrix = field(repr=False, compare=False)
    residual_floor: float = 0.0

    @property
    def eps(self) -> float:
        return self.mesh.domain.eps

    def scaled(self, factor: float) -> "PDESolution":
        """Same eigenpair with ``u`` multiplied by a positive ``factor``."""
        if not factor > 0:
            raise ValueError("factor must be positive")
        f = float(factor)
        return PDESolution(self.mesh, self.lam, self.u * f, self.grad_u * f, self.sup_u * f,
                           self.inf_u * f, self.mass_norm * f * f, self.residual,
                           self.iterations, self.integral_u * f, self.integral_abs_u * f, self.M,
                           self.residual_floor)


def _max_iterations(n: int) -> int:
    return 100 + n // 100


def solve_first_neumann(mesh: Mesh, tol: float = 1e-10) -> PDESolution:
    """Smallest nonzero eigenpair of ``K v = lam M v`` by shift-invert iteration.

    The constant mode is projected out in the M-inner product before and after
    every solve.  The start vector is ``cos(pi x)``.  Iteration stops once the
    relative residual is below ``tol``, or once it stagnates below the rounding
    bound of its own evaluation; high-aspect cells near a degenerate end can
    push that bound above 1e-10.
    """
    if tol < 1e-10:
        raise ValueError("tol must be at least 1e-10")
    K, M = assemble(mesh)
    n = K.shape[0]
    one = np.ones(n)
    m1 = M @ one
    total = float(one @ m1)
    if not total > 0:
        raise ConvergenceError("degenerate mass matrix")
    lu = spla.splu((K + SHIFT * M).tocsc())
    absK, absM = abs(K), abs(M)

    def deflate(v):
        return v - (m1 @ v) / total * one

    v = deflate(np.cos(np.pi * mesh.nodes[:, 0]))
    cap = _max_iterations(n)
    lam, res, prev = np.nan, np.inf, np.inf
    for it in range(1, cap + 1):
        v = deflate(lu.solve(M @ v))
        Mv = M @ v
        v /= math.sqrt(v @ Mv)
        Mv = M @ v
        Kv = K @ v
        lam = float(v @ Kv)
        scale = np.linalg.norm(lam * Mv)
        res = float(np.linalg.norm(Kv - lam * Mv) / scale)
        av = np.abs(v)
        floor = float(16 * np.finfo(float).eps * np.linalg.norm(absK @ av + lam * (absM @ av))
                      / scale)
        if res <= tol or (res <= floor and res > 0.7 * prev):
            break
        prev = res
    else:
        raise ConvergenceError(f"residual {res:.2e} after {cap} iterations")

    if np.mean(v[mesh.index[0]]) < 0:
        v = -v
    G, _ = _gradients(mesh)
    grad = np.einsum("mik,mi->mk", G, v[mesh.elements])
    split = mesh.split_elements
    abs_int = float(0.5 * np.sum(mesh.areas(split) * _abs_p1_mean(v[split])))
    return PDESolution(mesh, lam, v, grad, float(v.max()), float(v.min()), float(v @ (M @ v)),
                       res, it, float(m1 @ v), abs_int, M, floor)


def _abs_p1_mean(vals: np.ndarray) -> np.ndarray:
    """Element mean of ``|u|`` for linear ``u`` with vertex values ``vals``."""
    out = np.abs(vals).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _abs_mixed(vals, out)


def _abs_mixed(vals, out):
    mixed = (vals.min(axis=1) < 0) & (vals.max(axis=1) > 0)
    if mixed.any():
        # the lone vertex of opposite sign cuts off a corner triangle
        v = np.sort(vals[mixed], axis=1)
        s = np.sum(v, axis=1)
        a, b, c = v[:, 0], v[:, 1], v[:, 2]
        cut = np.where(b >= 0, a ** 3 / ((a - b) * (a - c)), c ** 3 / ((c - a) * (c - b)))
        out[mixed] = np.where(b >= 0, s / 3 - 2 * cut / 3, -s / 3 + 2 * cut / 3)
    return out


# --- cross sections ------------------------------------------------------

@dataclass(frozen=True)
class CrossSectionProfile:
    xs: np.ndarray
    omega: np.ndarray
    ubar: np.ndarray
    dubar: np.ndarray
    eta: np.ndarray
    cumulative: np.ndarray        # exact int_0^{x_i} omega ubar of the discrete solution
    total: float
    mean_defect: float            # sum omega ubar dx / sum omega |ubar| dx
    sup_u: float


def _strip_integrals(sol: PDESolution) -> np.ndarray:
    mesh = sol.mesh
    split = mesh.split_elements
    per_elem = 0.5 * mesh.areas(split) * sol.u[split].mean(axis=1)
    per_col = np.bincount(mesh.split_column, weights=per_elem, minlength=mesh.nx)
    return np.concatenate([[0.0], np.cumsum(per_col)])


def cross_section_average(sol: PDESolution) -> CrossSectionProfile:
    """Column averages ``ubar``, centered ``ubar'`` and ``eta = omega ubar' + lam int omega ubar``."""
    mesh = sol.mesh
    xs = mesh.xs
    U = sol.u[mesh.index]
    ubar = np.trapezoid(U, dx=1.0 / mesh.ny, axis=1)
    deg = mesh.degenerate
    ubar[deg] = U[deg, 0]
    omega = np.clip(mesh.widths, 0.0, None)
    dubar = np.gradient(ubar, xs, edge_order=2)
    cum = _strip_integrals(sol)
    eta = omega * dubar + sol.lam * cum
    wu = omega * ubar
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_defect = float(simpson(wu, x=xs) / simpson(np.abs(wu), x=xs))
    return CrossSectionProfile(xs, omega, ubar, dubar, eta, cum, float(cum[-1]), mean_defect,
                               sol.sup_u)


@dataclass(frozen=True)
class EtaProfile:
    eta_left: np.ndarray
    eta_right: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))


def eta_profile(prof: CrossSectionProfile, lam: float) -> EtaProfile:
    """Left- and right-sided forms of ``eta`` and their per-column difference."""
    left = prof.omega * prof.dubar + lam * prof.cumulative
    right = prof.omega * prof.dubar - lam * (prof.total - prof.cumulative)
    return EtaProfile(left, right, left - right)


# --- nodal set ---------------------------------------------------------------

@dataclass(frozen=True)
class NodalReport:
    eps: float
    s0: float
    s0_prime: float
    row_roots: np.ndarray                   # (k, 2): logical row j, root x
    per_column_roots: list = field(repr=False)  # (x_i, y_lo, y_hi) per cell containing roots
    proj_min: float
    proj_max: float

    @property
    def width(self) -> float:
        return self.proj_max - self.proj_min


def _linear_roots(xs: np.ndarray, f: np.ndarray) -> np.ndarray:
    pos = f > 0
    k = np.nonzero(pos[:-1] != pos[1:])[0]
    return xs[k] + f[k] / (f[k] - f[k + 1]) * (xs[k + 1] - xs[k])


def nodal_set(sol: PDESolution, prof: Optional[CrossSectionProfile] = None) -> NodalReport:
    """Row-wise zeros of ``u`` and the zeros of ``ubar`` by linear interpolation."""
    mesh = sol.mesh
    prof = cross_section_average(sol) if prof is None else prof
    U = sol.u[mesh.index]
    roots = []
    cells = {}
    for j in range(mesh.ny + 1):
        r = _linear_roots(mesh.xs, U[:, j])
        for x in r:
            roots.append((j, x))
            i = min(int(x * mesh.nx), mesh.nx - 1)
            y = mesh.nodes[mesh.index[i, j], 1]
            lo, hi = cells.get(i, (y, y))
            cells[i] = (min(lo, y), max(hi, y))
    if not roots:
        raise ConvergenceError("no sign change of u along any mesh row")
    zb = _linear_roots(prof.xs, prof.ubar)
    if len(zb) == 0:
        raise ConvergenceError("cross-section average has no zero")
    rr = np.array(roots, dtype=float)
    per_col = [(float(mesh.xs[i]), lo, hi) for i, (lo, hi) in sorted(cells.items())]
    return NodalReport(sol.eps, float(zb[0]), float(zb[-1]), rr, per_col,
                       float(rr[:, 1].min()), float(rr[:, 1].max()))


# --- bound diagnostics -------------------------------------------------------

@dataclass(frozen=True)
class GradientReport:
    r_grad: float
    r_grad_at: tuple
    r_dy: float
    r_dy_at: tuple
    r_dy_boundary: float
    r_dy_interior: float


def gradient_diagnostics(sol: PDESolution, prof: Optional[CrossSectionProfile] = None
                         ) -> GradientReport:
    """Largest ``|grad u| / (max(||x||, eps) sup|u|)`` and ``|u_y| / (eps sup|ubar|)``."""
    mesh = sol.mesh
    prof = cross_section_average(sol) if prof is None else prof
    eps = sol.eps
    cent = mesh.nodes[mesh.elements].mean(axis=1)
    dist = np.minimum(cent[:, 0], 1.0 - cent[:, 0])
    sup_abs_u = max(abs(sol.sup_u), abs(sol.inf_u))
    sup_ubar = float(np.max(np.abs(prof.ubar)))
    g = np.hypot(sol.grad_u[:, 0], sol.grad_u[:, 1])
    rg = g / (np.maximum(dist, eps) * sup_abs_u)
    rd = np.abs(sol.grad_u[:, 1]) / (eps * sup_ubar)
    ig, idy = int(np.argmax(rg)), int(np.argmax(rd))
    on_bnd = mesh.boundary[mesh.elements].any(axis=1)
    rb = float(rd[on_bnd].max()) if on_bnd.any() else 0.0
    ri = float(rd[~on_bnd].max()) if (~on_bnd).any() else 0.0
    return GradientReport(float(rg[ig]), tuple(cent[ig]), float(rd[idy]), tuple(cent[idy]), rb, ri)


def transverse_oscillation(sol: PDESolution, prof: Optional[CrossSectionProfile] = None):
    """``max_i (max_y u - min_y u) / sup|ubar|`` and the per-column profile."""
    mesh = sol.mesh
    prof = cross_section_average(sol) if prof is None else prof
    U = sol.u[mesh.index]
    spread = (U.max(axis=1) - U.min(axis=1)) / float(np.max(np.abs(prof.ubar)))
    return float(spread.max()), spread


def _interior(prof: CrossSectionProfile, delta: float) -> np.ndarray:
    return (prof.xs >= delta - 1e-12) & (prof.xs <= 1.0 - delta + 1e-12)


def energy_check(prof: CrossSectionProfile, lam: float, eps: float) -> float:
    """``int_eps^{1-eps} omega ubar'^2 / int_eps^{1-eps} omega ubar^2``."""
    m = _interior(prof, eps)
    x = prof.xs[m]
    den = simpson(prof.omega[m] * prof.ubar[m] ** 2, x=x)
    if not den > 0:
        raise ZeroDivisionError("vanishing profile energy")
    return float(simpson(prof.omega[m] * prof.dubar[m] ** 2, x=x) / den)


def profile_ratios(sol: PDESolution, prof: CrossSectionProfile, delta: float = 0.2,
                   max_pairs: int = 1025) -> dict:
    """Normalized bound ratios of the cross-section profile.

    ``eta_ratio`` and ``eta_ratio_phi`` divide ``max |eta| / omega`` on
    ``[eps, 1 - eps]`` by ``eps sup|ubar|``; the caller supplies ``sup|phi|``
    for the second by rescaling.  ``lipschitz`` is the largest
    ``|ubar(x1) - ubar(x2)| / ((|x1 - x2| + eps) sup|u|)``.
    """
    eps = sol.eps
    sup_abs_u = max(abs(sol.sup_u), abs(sol.inf_u))
    sup_ubar = float(np.max(np.abs(prof.ubar)))
    m = _interior(prof, eps) & (prof.omega > 0)
    eta_over = float(np.max(np.abs(prof.eta[m]) / prof.omega[m]))
    step = max(1, (len(prof.xs) - 1) // (max_pairs - 1))
    xs, ub = prof.xs[::step], prof.ubar[::step]
    lip = np.abs(ub[:, None] - ub[None, :]) / ((np.abs(xs[:, None] - xs[None, :]) + eps)
                                                * sup_abs_u)
    inner = _interior(prof, delta)
    decrease = float(np.min(-prof.dubar[inner]) / sup_ubar)
    mi = _interior(prof, eps)
    l2 = simpson(prof.omega[mi] * prof.ubar[mi] ** 2, x=prof.xs[mi])
    sup_l2 = sup_ubar ** 2 * simpson(prof.omega, x=prof.xs) / l2
    return {
        "eta_over_omega": eta_over / sup_ubar,
        "eta_ratio": eta_over / (eps * sup_ubar),
        "lipschitz": float(lip.max()),
        "interior_decrease": decrease,
        "sup_l2": float(sup_l2),
        "ubar0_over_sup": float(prof.ubar[0] / sol.sup_u),
        "supinf_ratio": float(sol.sup_u / -sol.inf_u),
    }
