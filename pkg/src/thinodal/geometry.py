"""Thin convex planar domains and their cross-sectional weights.

A domain is stored as two boundary graphs over ``[0, 1]``: ``g_bot(x) < y <
g_top(x)``.  All built-in families use piecewise polynomial graphs so that
the cross-sectional width ``omega = g_top - g_bot`` is exact and can be
evaluated inside the compiled shooting kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

__all__ = [
    "DomainError",
    "InvalidWeightError",
    "PiecewisePolynomial",
    "Domain2D",
    "WeightProfile",
    "InequalityCheck",
    "WeightCheckReport",
    "FAMILIES",
    "make_domain",
    "width_profile",
    "check_domain",
    "check_weight_inequalities",
    "brunn_minkowski_check",
    "polynomial_weight",
    "callable_weight",
]

CONVEXITY_TOL = 1e-12
SINGULAR_TOL = 1e-14


class DomainError(ValueError):
    """A domain violates one of its defining invariants."""

    def __init__(self, invariant: str, message: str = ""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {message}" if message else invariant)


class InvalidWeightError(ValueError):
    """A weight profile cannot be used (non-positive interior values, etc.)."""


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Continuous piecewise polynomial in the global variable ``x``.

    ``coefs[k]`` holds ascending monomial coefficients valid on
    ``[breaks[k], breaks[k + 1]]``.
    """

    breaks: np.ndarray
    coefs: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.breaks, dtype=float)
        c = np.ascontiguousarray(np.atleast_2d(self.coefs), dtype=float)
        if b.ndim != 1 or len(b) != c.shape[0] + 1:
            raise ValueError("breaks must have one more entry than coefficient rows")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breaks must be strictly increasing")
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "coefs", c)

    @classmethod
    def constant(cls, value: float) -> "PiecewisePolynomial":
        return cls(np.array([0.0, 1.0]), np.array([[value]]))

    @classmethod
    def polynomial(cls, coefs: Sequence[float]) -> "PiecewisePolynomial":
        return cls(np.array([0.0, 1.0]), np.array([list(coefs)]))

    @classmethod
    def linear_interp(cls, xs: Sequence[float], ys: Sequence[float]) -> "PiecewisePolynomial":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        slope = np.diff(ys) / np.diff(xs)
        c0 = ys[:-1] - slope * xs[:-1]
        return cls(xs, np.column_stack([c0, slope]))

    @property
    def degree(self) -> int:
        return self.coefs.shape[1] - 1

    def _piece(self, x: np.ndarray) -> np.ndarray:
        k = np.searchsorted(self.breaks, x, side="right") - 1
        return np.clip(k, 0, len(self.coefs) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefs[self._piece(x)]
        out = c[..., -1]
        for j in range(self.degree - 1, -1, -1):
            out = out * x + c[..., j]
        return out

    def derivative(self) -> "PiecewisePolynomial":
        if self.degree == 0:
            return PiecewisePolynomial(self.breaks, np.zeros_like(self.coefs))
        powers = np.arange(1, self.degree + 1)
        return PiecewisePolynomial(self.breaks, self.coefs[:, 1:] * powers)

    def __add__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return _combine(self, other, 1.0)

    def __sub__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return _combine(self, other, -1.0)

    def scaled(self, factor: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.breaks, self.coefs * factor)

    def reflected(self) -> "PiecewisePolynomial":
        """The polynomial ``x -> p(1 - x)`` on the reflected breakpoints."""
        rows = []
        for c in self.coefs[::-1]:
            p = np.polynomial.Polynomial(c)(np.polynomial.Polynomial([1.0, -1.0]))
            row = np.zeros(len(c))
            row[: len(p.coef)] = p.coef
            rows.append(row)
        return PiecewisePolynomial(1.0 - self.breaks[::-1], np.array(rows))


def _combine(p: PiecewisePolynomial, q: PiecewisePolynomial, sign: float) -> PiecewisePolynomial:
    breaks = np.union1d(p.breaks, q.breaks)
    mid = 0.5 * (breaks[:-1] + breaks[1:])
    deg = max(p.degree, q.degree)
    cp = np.zeros((len(mid), deg + 1))
    cq = np.zeros((len(mid), deg + 1))
    cp[:, : p.degree + 1] = p.coefs[p._piece(mid)]
    cq[:, : q.degree + 1] = q.coefs[q._piece(mid)]
    return PiecewisePolynomial(breaks, cp + sign * cq)


@dataclass(frozen=True)
class Domain2D:
    """Vertical graph domain ``{(x, y): 0 < x < 1, g_bot(x) < y < g_top(x)}``."""

    g_top: PiecewisePolynomial
    g_bot: PiecewisePolynomial
    eps: float
    family_name: str
    params: tuple = ()

    def width(self, x):
        return self.g_top(x) - self.g_bot(x)

    @property
    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class WeightProfile:
    """Cross-sectional volume ``omega`` on ``[0, 1]`` for ambient dimension ``n``.

    ``pieces`` is the exact piecewise polynomial form when one is known; the
    compiled shooting kernel only accepts weights that carry it.
    """

    omega: Callable[[np.ndarray], np.ndarray]
    n: int = 2
    singular_left: bool = False
    singular_right: bool = False
    pieces: Optional[PiecewisePolynomial] = None
    name: str = "custom"

    def __call__(self, x):
        return self.omega(x)

    def reflected(self) -> "WeightProfile":
        """The weight ``x -> omega(1 - x)``."""
        pieces = self.pieces.reflected() if self.pieces is not None else None
        omega = pieces if pieces is not None else (lambda x, f=self.omega: f(1.0 - np.asarray(x)))
        return WeightProfile(omega, self.n, self.singular_right, self.singular_left, pieces,
                             self.name + "~")

    def scaled(self, factor: float) -> "WeightProfile":
        pieces = self.pieces.scaled(factor) if self.pieces is not None else None
        omega = pieces if pieces is not None else (lambda x, f=self.omega: factor * f(x))
        return WeightProfile(omega, self.n, self.singular_left, self.singular_right, pieces,
                             self.name)

    def normalized(self, grid_size: int = 257) -> "WeightProfile":
        """Rescaled to unit maximum; eigenpairs are invariant under scaling."""
        peak = float(np.max(self.omega(np.linspace(0.0, 1.0, grid_size))))
        if not peak > 0:
            raise InvalidWeightError("weight has no positive values")
        return self.scaled(1.0 / peak)

    def first_break(self) -> float:
        """Distance from x = 0 to the first interior breakpoint (1 if none)."""
        if self.pieces is None or len(self.pieces.breaks) <= 2:
            return 1.0
        return float(self.pieces.breaks[1])

    def monotone_radius(self, grid_size: int = 4097) -> float:
        """Length of the initial interval ``[0, delta]`` on which omega is nondecreasing.

        Regular endpoints return 1: no restriction applies there.
        """
        if not self.singular_left:
            return 1.0
        xs = np.linspace(0.0, 1.0, grid_size)
        om = np.asarray(self.omega(xs), dtype=float)
        bad = np.nonzero(np.diff(om) < -1e-15 * max(float(np.max(om)), 1e-300))[0]
        return 1.0 if len(bad) == 0 else float(xs[bad[0]])


def polynomial_weight(coefs: Sequence[float], n: int = 2, name: str = "poly") -> WeightProfile:
    """Weight given by ascending monomial coefficients on ``[0, 1]``."""
    p = PiecewisePolynomial.polynomial(coefs)
    return _weight_from_pieces(p, n, name)


def callable_weight(omega: Callable, n: int = 2, name: str = "custom") -> WeightProfile:
    """Weight backed by an arbitrary vectorised callable."""
    ends = np.asarray(omega(np.array([0.0, 1.0])), dtype=float)
    return WeightProfile(omega, n, bool(abs(ends[0]) <= SINGULAR_TOL),
                         bool(abs(ends[1]) <= SINGULAR_TOL), None, name)


def _weight_from_pieces(p: PiecewisePolynomial, n: int, name: str) -> WeightProfile:
    ends = p(np.array([0.0, 1.0]))
    return WeightProfile(p, n, bool(abs(ends[0]) <= SINGULAR_TOL),
                         bool(abs(ends[1]) <= SINGULAR_TOL), p, name)


# --- domain families -------------------------------------------------------

def _rectangle(eps: float, params: Mapping) -> tuple:
    return (PiecewisePolynomial.constant(eps / 2), PiecewisePolynomial.constant(-eps / 2))


def _wedge(eps: float, params: Mapping) -> tuple:
    return (PiecewisePolynomial.polynomial([0.0, eps / 2]),
            PiecewisePolynomial.polynomial([0.0, -eps / 2]))


def _trapezoid(eps: float, params: Mapping) -> tuple:
    return (PiecewisePolynomial.polynomial([eps / 4, eps / 4]),
            PiecewisePolynomial.polynomial([-eps / 4, -eps / 4]))


def _lens(eps: float, params: Mapping) -> tuple:
    # width = eps * (blunt + (1 - blunt) * 4x(1 - x)); blunt = 0 gives cusps at both ends
    blunt = float(params.get("blunt", 0.0))
    if not 0.0 <= blunt < 1.0:
        raise DomainError("params", "lens blunt must lie in [0, 1)")
    a = eps / 2 * (1 - blunt) * 4
    top = PiecewisePolynomial.polynomial([eps / 2 * blunt, a, -a])
    return top, top.scaled(-1.0)


_POLYGON_DEFAULT = {
    "xs": (0.0, 0.3, 0.7, 1.0),
    "top": (0.2, 1.0, 1.0, 0.4),
    "bot": (-0.2, -1.0, -0.8, -0.4),
}


def _polygon(eps: float, params: Mapping) -> tuple:
    # vertex heights are in units of eps / 2
    xs = tuple(params.get("xs", _POLYGON_DEFAULT["xs"]))
    top = tuple(params.get("top", _POLYGON_DEFAULT["top"]))
    bot = tuple(params.get("bot", _POLYGON_DEFAULT["bot"]))
    if not (len(xs) == len(top) == len(bot) >= 2) or xs[0] != 0.0 or xs[-1] != 1.0:
        raise DomainError("params", "polygon needs matching xs/top/bot with xs from 0 to 1")
    half = eps / 2
    return (PiecewisePolynomial.linear_interp(xs, np.array(top) * half),
            PiecewisePolynomial.linear_interp(xs, np.array(bot) * half))


FAMILIES: dict[str, Callable] = {
    "rectangle": _rectangle,
    "wedge": _wedge,
    "trapezoid": _trapezoid,
    "lens": _lens,
    "polygon": _polygon,
}


def check_domain(dom: Domain2D, grid_size: int = 1024) -> None:
    """Raise :class:`DomainError` naming the first violated invariant."""
    xs = np.linspace(0.0, 1.0, grid_size + 1)
    top, bot = dom.g_top(xs), dom.g_bot(xs)
    if np.any(top[:-2] + top[2:] - 2 * top[1:-1] > CONVEXITY_TOL):
        raise DomainError("concave_top", "upper boundary graph is not concave")
    if np.any(2 * bot[1:-1] - bot[:-2] - bot[2:] > CONVEXITY_TOL):
        raise DomainError("convex_bottom", "lower boundary graph is not convex")
    if np.any(top[1:-1] - bot[1:-1] <= 0):
        raise DomainError("ordered_graphs", "g_bot must lie strictly below g_top inside (0, 1)")
    if np.any(top[1:-1] >= dom.eps) or np.any(bot[1:-1] <= -dom.eps):
        raise DomainError("containment", "domain leaves [0,1] x (-eps, eps)")
    if np.any(top - bot > 2 * dom.eps + CONVEXITY_TOL):
        raise DomainError("width_bound", "width exceeds 2 eps")


def make_domain(family: str, eps: float, params: Optional[Mapping] = None) -> Domain2D:
    """Instantiate a built-in family and validate it.

    >>> make_domain("rectangle", 0.1).width(0.3)
    array(0.1)
    """
    if family not in FAMILIES:
        raise DomainError("family", f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
    if not 0.0 < eps <= 0.5:
        raise DomainError("eps", f"eps must lie in (0, 0.5], got {eps}")
    params = dict(params or {})
    g_top, g_bot = FAMILIES[family](eps, params)
    frozen = tuple(sorted((k, tuple(v) if isinstance(v, (list, tuple)) else float(v))
                          for k, v in params.items()))
    dom = Domain2D(g_top, g_bot, float(eps), family, frozen)
    check_domain(dom)
    return dom


def width_profile(dom: Domain2D) -> WeightProfile:
    """ω(x) = g_top(x) − g_bot(x) with n = 2."""
    return _weight_from_pieces(dom.g_top - dom.g_bot, 2, dom.family_name)


# --- convexity-derived inequalities ---------------------------------------

@dataclass
class InequalityCheck:
    name: str
    passed: bool
    slack: float
    detail: dict = field(default_factory=dict)


@dataclass
class WeightCheckReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> InequalityCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _rel_slack(lhs: np.ndarray, rhs: np.ndarray) -> float:
    """Worst (rhs - lhs) / |rhs| over all entries of ``lhs <= rhs``."""
    scale = np.maximum(np.abs(rhs), 1e-300)
    return float(np.min((rhs - lhs) / scale))


def brunn_minkowski_check(w: WeightProfile, grid_size: int = 256) -> tuple[bool, float]:
    """Midpoint concavity of ``omega ** (1/(n-1))`` over all grid pairs.

    Returns ``(passed, worst_deficit)``; the deficit is 0 when every midpoint
    inequality holds.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    xs = np.linspace(0.0, 1.0, grid_size + 1)
    p = 1.0 / (w.n - 1)
    root = np.maximum(w.omega(xs), 0.0) ** p
    ia, ib = np.triu_indices(len(xs), k=1)
    mid = np.maximum(w.omega(0.5 * (xs[ia] + xs[ib])), 0.0) ** p
    deficit = 0.5 * (root[ia] + root[ib]) - mid
    worst = float(max(np.max(deficit), 0.0))
    return worst <= CONVEXITY_TOL, worst


def check_weight_inequalities(w: WeightProfile, grid_size: int = 128,
                              eps_values: Sequence[float] = (0.2, 0.1, 0.05, 0.025)
                              ) -> WeightCheckReport:
    """Check the convexity consequences for ``omega`` on all grid pairs ``a < b``.

    Integrals use composite Simpson on the grid.  The end-mass comparison
    uses the constant ``2 ** (n + 1)``, valid for ``eps < 1/4``.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    n = w.n
    xs = np.linspace(0.0, 1.0, grid_size + 1)
    om = np.asarray(w.omega(xs), dtype=float)
    if np.any(om[1:-1] <= 0):
        raise InvalidWeightError("omega is not positive on the grid interior")
    F = np.concatenate([[0.0], cumulative_simpson(om, x=xs)])
    total = F[-1]

    inner = np.arange(1, grid_size)
    ia, ib = np.meshgrid(inner, inner, indexing="ij")
    keep = ia < ib
    ia, ib = ia[keep], ib[keep]
    a, b = xs[ia], xs[ib]
    wa, wb = om[ia], om[ib]
    mid = F[ib] - F[ia]

    checks = []
    s1 = _rel_slack(wb, wa * (b / a) ** (n - 1))
    s2 = _rel_slack(wa, wb * ((1 - a) / (1 - b)) ** (n - 1))
    slack = min(s1, s2)
    checks.append(InequalityCheck("omaomb", slack >= -CONVEXITY_TOL, slack,
                                  {"upper": s1, "lower": s2}))

    right = total - F[ib]
    left = F[ia]
    s1 = _rel_slack(right, (1 - b) / (b - a) * (1 / a) ** (n - 1) * mid)
    s2 = _rel_slack(left, a / (b - a) * (1 / (1 - b)) ** (n - 1) * mid)
    slack = min(s1, s2)
    checks.append(InequalityCheck("omb1", slack >= -CONVEXITY_TOL, slack,
                                  {"right_tail": s1, "left_tail": s2}))

    C = 1 / (b - a) * ((1 / a) ** (n - 1) * (1 - b) + (1 / (1 - b)) ** (n - 1) * a) + 1
    slack = _rel_slack(np.full_like(mid, total), C * mid)
    checks.append(InequalityCheck("om01", slack >= -CONVEXITY_TOL, slack))

    c_end = 2.0 ** (n + 1)
    ratios = {}
    worst = math.inf
    for eps in eps_values:
        ends = _simpson(w.omega, 0.0, eps) + _simpson(w.omega, 1.0 - eps, 1.0)
        body = _simpson(w.omega, eps, 1.0 - eps)
        ratios[eps] = ends / body
        worst = min(worst, (c_end * eps - ratios[eps]) / (c_end * eps))
    checks.append(InequalityCheck("omend", worst >= -CONVEXITY_TOL, worst,
                                  {"constant": c_end, "ratios": ratios}))

    ok, deficit = brunn_minkowski_check(w, grid_size)
    checks.append(InequalityCheck("brunn_minkowski", ok, -deficit))
    return WeightCheckReport(checks)


def _simpson(f: Callable, a: float, b: float, n: int = 256) -> float:
    xs = np.linspace(a, b, n + 1)
    return float(simpson(f(xs), x=xs))
