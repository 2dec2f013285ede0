"""Optimal sensor placement density for a known transmitter density.

The quantity minimised is the probability that every sensor misses a single
transmitter drawn from ``f_X``::

    P_miss(f_lambda) = int_0^1 (1 - 2 r f_lambda(x))^n f_X(x) dx

subject to ``f_lambda >= 0`` and ``int f_lambda = 1``.  The stationary point
of the Lagrangian is ``f_lambda = (1 - (mu / (2 n r f_X))^(1/(n-1))) / (2r)``,
clipped to zero where it would go negative or where ``f_X`` vanishes.

Internally the multiplier is carried as the level
``t = (mu / (2 n r))^(1/(n-1))`` so that ``1 - 2 r f_lambda = min(1, t f_X^(-1/(n-1)))``.
``t`` is O(1) for every (n, r) of interest, which lets the bisection reach
machine precision even when ``mu`` itself is ~1e-8.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .field_model import SpatialPdf

DEFAULT_GRID = 4097
QUAD_TOL = 1e-10
NORM_TOL = 1e-6
MAX_OUTPUT_GRID = 65537
MAX_GRID = 2**22 + 1


class DegenerateDensityError(ValueError):
    """n == 1: the objective does not depend on the sensor density."""


class IntegrandOutOfRange(ValueError):
    """``2 r f_lambda(x) > 1`` somewhere, so the detection model breaks down."""


class BracketError(RuntimeError):
    """The multiplier could not be bracketed (malformed ``f_X``)."""


def _trapezoid(y: np.ndarray, h: float) -> float:
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


def _grid(points: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def _refine(points: int) -> int:
    return 2 * (points - 1) + 1


def uniform_miss_closed_form(n: int, r_s: float) -> float:
    """Miss probability of uniform sensors against any f_X, ignoring edges."""
    return (1.0 - 2.0 * r_s) ** n


def triangular_miss_closed_form(n: int, r_s: float) -> float:
    """Relaxed optimum for the triangular transmitter density (n >= 3)."""
    if n < 3:
        raise ValueError("closed form needs n >= 3")
    return 2.0 * (1.0 - 2.0 * r_s) ** n / ((n - 1) / (n - 2)) ** (n - 1)


def lp_norm_miss_probability(f_X: SpatialPdf, n: int, r_s: float) -> float:
    """``(1 - 2r)^n / (int f_X^(-1/(n-1)))^(n-1)`` with the integral by quadrature.

    This is the value of the stationary point when the non-negativity
    constraint is ignored.  It lower-bounds the constrained optimum and
    equals it only when the unclipped stationary density is non-negative.
    """
    if n < 2:
        raise ValueError("needs n >= 2")
    q = 1.0 / (n - 1)
    pieces = {"triangular": [(0.0, 0.5), (0.5, 1.0)]}.get(f_X.kind, [(0.0, 1.0)])
    total = 0.0
    for a, b in pieces:
        total += _quad_piece(lambda x: f_X.pdf_scalar(x) ** (-q) if f_X.pdf_scalar(x) > 0 else 0.0, a, b)[0]
    return (1.0 - 2.0 * r_s) ** n / total ** (n - 1)


# ---------------------------------------------------------------------------
# quadrature helpers


def _kinks(pdf: SpatialPdf) -> list[float]:
    return [0.5] if pdf.kind == "triangular" else []


def _crossings(func, level: float, scan: int = 20001) -> list[float]:
    """Points in (0, 1) where ``func(x) - level`` changes sign."""
    x = np.linspace(0.0, 1.0, scan)
    g = func(x) - level
    idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    out = []
    for i in idx:
        out.append(optimize.brentq(lambda t: float(func(t)) - level, x[i], x[i + 1], xtol=1e-16, rtol=1e-15))
    zero = np.flatnonzero((g[1:-1] == 0.0) & (g[:-2] * g[2:] < 0)) + 1
    out.extend(float(x[i]) for i in zero)
    return out


# Decade breakpoints next to both ends: densities vanishing at an edge give
# integrands like x^(-1/(n-1)) that vary on the scale of a tiny clip point.
_EDGE_BREAKS = [10.0**-k for k in range(1, 16)] + [1.0 - 10.0**-k for k in range(1, 16)]


def _quad_piece(func, a: float, b: float) -> tuple[float, float]:
    # Next to x = 1 the argument itself carries only ~1e-16 absolute precision,
    # so QUADPACK may report roundoff there; the caller checks the error sum.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(func, a, b, limit=500, epsabs=0.0, epsrel=1e-13)


def _quad(func, breaks: list[float]) -> float:
    """Adaptive quadrature of a scalar function over [0, 1] split at ``breaks``."""
    edges = sorted({0.0, 1.0, *_EDGE_BREAKS, *[b for b in breaks if 0.0 < b < 1.0]})
    total = err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            val, e = _quad_piece(func, a, b)
            total += val
            err += e
    if err > 1e-9 * abs(total) + 1e-20:
        warnings.warn(f"quadrature error estimate {err:.3g} for value {total:.6g}", RuntimeWarning, stacklevel=2)
    return total


# ---------------------------------------------------------------------------
# miss probability of a given placement density


def _miss_on_grid(f_X: SpatialPdf, f_lambda: SpatialPdf, n: int, r_s: float,
                  points: int, clamp: bool) -> tuple[float, bool]:
    x = _grid(points)
    det = 2.0 * r_s * f_lambda.pdf(x)
    over = bool(np.any(det > 1.0))
    if over and not clamp:
        raise IntegrandOutOfRange(f"2 r f_lambda reaches {det.max():.6g} > 1")
    base = np.clip(1.0 - det, 0.0, 1.0)
    return _trapezoid(base**n * f_X.pdf(x), x[1] - x[0]), over


def _miss_quadrature(f_X, f_lambda, n, r_s, grid_points, tol, clamp) -> tuple[float, bool]:
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1.0, False
    peak = 2.0 * r_s * f_lambda.max_value()
    if not clamp and peak > 1.0:
        raise IntegrandOutOfRange(f"2 r max f_lambda = {peak:.6g} > 1")
    if "tabulated" not in (f_X.kind, f_lambda.kind):
        breaks = _kinks(f_X) + _kinks(f_lambda)
        if peak > 1.0:
            breaks += _crossings(f_lambda.pdf, 1.0 / (2.0 * r_s))

        def integrand(x: float) -> float:
            base = min(max(1.0 - 2.0 * r_s * f_lambda.pdf_scalar(x), 0.0), 1.0)
            return base**n * f_X.pdf_scalar(x)

        return min(max(_quad(integrand, breaks), 0.0), 1.0), peak > 1.0
    points = max(int(grid_points), 3)
    prev, over = _miss_on_grid(f_X, f_lambda, n, r_s, points, clamp)
    while points < MAX_GRID:
        points = _refine(points)
        cur, over = _miss_on_grid(f_X, f_lambda, n, r_s, points, clamp)
        if abs(cur - prev) <= tol * abs(cur):
            return min(max(cur, 0.0), 1.0), over
        prev = cur
    return min(max(prev, 0.0), 1.0), over


def miss_probability(f_X: SpatialPdf, f_lambda: SpatialPdf, n: int, r_s: float,
                     grid_points: int = DEFAULT_GRID, tol: float = QUAD_TOL) -> float:
    """Model miss probability ``int (1 - 2 r f_lambda)^n f_X``.

    Analytic densities use adaptive quadrature; if either density is
    tabulated a composite trapezoid is doubled until successive values agree
    to ``tol`` relative.  Raises :class:`IntegrandOutOfRange` if
    ``2 r_s f_lambda`` exceeds 1.
    """
    return _miss_quadrature(f_X, f_lambda, n, r_s, grid_points, tol, clamp=False)[0]


def clamped_miss_probability(f_X: SpatialPdf, f_lambda: SpatialPdf, n: int, r_s: float,
                             grid_points: int = DEFAULT_GRID, tol: float = QUAD_TOL) -> tuple[float, bool]:
    """Like :func:`miss_probability` but clamps ``1 - 2 r f_lambda`` to [0, 1].

    Returns ``(value, clamped)`` where ``clamped`` tells whether the clamp fired.
    """
    return _miss_quadrature(f_X, f_lambda, n, r_s, grid_points, tol, clamp=True)


# ---------------------------------------------------------------------------
# optimal density


@dataclass(frozen=True, eq=False)
class DensitySolution:
    """Optimal density tabulated on a uniform grid, plus its multiplier."""

    f_X: SpatialPdf
    x: np.ndarray
    f_x_values: np.ndarray
    f_lambda_values: np.ndarray
    level: float
    mu: float
    p_miss: float
    n: int
    r_s: float
    f_lambda_exact: np.ndarray | None = None

    @property
    def tabulation_error(self) -> float:
        """Trapezoid mass of the pointwise optimum on the grid, minus 1."""
        exact = self.f_lambda_values if self.f_lambda_exact is None else self.f_lambda_exact
        return _trapezoid(exact, self.x[1] - self.x[0]) - 1.0

    @cached_property
    def f_lambda(self) -> SpatialPdf:
        return SpatialPdf.tabulated(self.f_lambda_values)

    @property
    def grid_points(self) -> int:
        return int(self.x.size)

    def normalization(self) -> float:
        return _trapezoid(self.f_lambda_values, self.x[1] - self.x[0])

    def clipped_fraction(self) -> float:
        """Fraction of grid points where the optimal density is zero."""
        return float(np.mean(self.f_lambda_values <= 0.0))

    def stationarity_residual(self) -> float:
        """Max relative violation of ``n (1 - 2r f)^(n-1) f_X 2r = mu`` where f > 0."""
        f = self.f_lambda_values if self.f_lambda_exact is None else self.f_lambda_exact
        live = (f > 0) & (self.f_x_values > 0)
        if not np.any(live):
            return 0.0
        base = 1.0 - 2.0 * self.r_s * f[live]
        lhs = self.n * base ** (self.n - 1) * self.f_x_values[live] * 2.0 * self.r_s
        return float(np.max(np.abs(lhs - self.mu)) / self.mu)


def _base_at_level(fx: np.ndarray, level: float, q: float) -> np.ndarray:
    """``1 - 2 r f_lambda`` for a given level; 1 wherever f_X vanishes."""
    fx = np.asarray(fx, dtype=float)
    base = np.ones_like(fx)
    live = fx > 0
    base[live] = np.minimum(level * fx[live] ** (-q), 1.0)
    return base


def _base_scalar(fx: float, level: float, q: float) -> float:
    return min(level * fx ** (-q), 1.0) if fx > 0 else 1.0


class _Problem:
    """Normalisation and objective as functions of the level."""

    def __init__(self, f_X: SpatialPdf, n: int, r_s: float, grid_points: int) -> None:
        self.f_X, self.n, self.r_s = f_X, n, r_s
        self.q = 1.0 / (n - 1)
        self.adaptive = f_X.kind != "tabulated"
        self.points = grid_points
        self._set_grid(grid_points)

    def _set_grid(self, points: int) -> None:
        self.points = points
        self.x = _grid(points)
        self.h = self.x[1] - self.x[0]
        self.fx = self.f_X.pdf(self.x)

    def refine(self) -> None:
        self._set_grid(_refine(self.points))

    def _breaks(self, level: float) -> list[float]:
        return _kinks(self.f_X) + _crossings(self.f_X.pdf, level ** (self.n - 1))

    def normalization(self, level: float) -> float:
        if not self.adaptive:
            return _trapezoid((1.0 - _base_at_level(self.fx, level, self.q)) / (2.0 * self.r_s), self.h)

        def f_lam(x: float) -> float:
            return (1.0 - _base_scalar(self.f_X.pdf_scalar(x), level, self.q)) / (2.0 * self.r_s)

        return _quad(f_lam, self._breaks(level))

    def p_miss(self, level: float) -> float:
        n = self.n
        if not self.adaptive:
            return _trapezoid(_base_at_level(self.fx, level, self.q) ** n * self.fx, self.h)

        def integrand(x: float) -> float:
            fx = self.f_X.pdf_scalar(x)
            return _base_scalar(fx, level, self.q) ** n * fx

        return _quad(integrand, self._breaks(level))

    def level_bracket(self) -> float:
        peak = self.f_X.max_value() if self.adaptive else float(np.max(self.fx))
        return float(peak**self.q)

    def check_monotone(self, samples: int = 17) -> None:
        """The normalisation must decrease along the bracket for bisection to apply."""
        levels = np.linspace(0.0, self.level_bracket(), samples)
        vals = np.array([self.normalization(t) for t in levels])
        if np.any(np.diff(vals) > 1e-12 * max(1.0, vals[0])):
            raise BracketError("normalisation is not monotone in the multiplier")

    def solve_level(self) -> float:
        hi = self.level_bracket()
        if not hi > 0:
            raise BracketError("f_X vanishes everywhere")
        if self.normalization(0.0) <= 1.0:
            raise BracketError(f"support of f_X too small for r_s={self.r_s}")
        self.check_monotone()
        lo = 0.0
        while hi - lo > 1e-15 * hi:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            resid = self.normalization(mid) - 1.0
            if resid == 0.0:
                return mid
            if resid > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def optimal_density(f_X: SpatialPdf, n: int, r_s: float, grid_points: int = DEFAULT_GRID,
                    tol: float = QUAD_TOL) -> DensitySolution:
    """Optimal sensor density for transmitter density ``f_X``.

    The multiplier is found by bisection on the normalisation constraint.
    For analytic ``f_X`` normalisation and miss probability are computed by
    adaptive quadrature split at the kinks and clip points; for a tabulated
    ``f_X`` a trapezoid grid starting at ``grid_points`` is doubled until
    successive miss probabilities agree to ``tol`` relative.  The returned
    density is tabulated on a uniform grid of at least ``grid_points``
    points, refined (up to ``MAX_OUTPUT_GRID``) until its trapezoid mass is
    within ``NORM_TOL`` of 1, then rescaled to unit mass.
    """
    if n == 1:
        raise DegenerateDensityError("degenerate: any continuous positive density is optimal when n = 1")
    if n < 1:
        raise ValueError("n must be >= 2")
    if not 0.0 < r_s < 0.5:
        raise ValueError(f"r_s must be in (0, 1/2), got {r_s}")
    grid_points = max(int(grid_points), DEFAULT_GRID)
    prob = _Problem(f_X, n, r_s, grid_points)
    level = prob.solve_level()
    p_miss = prob.p_miss(level)
    if not prob.adaptive:
        while prob.points < MAX_GRID:
            prob.refine()
            level = prob.solve_level()
            cur = prob.p_miss(level)
            done = abs(cur - p_miss) <= tol * abs(cur)
            p_miss = cur
            if done:
                break
    points = grid_points
    while True:
        x = _grid(points)
        fx = f_X.pdf(x)
        exact = (1.0 - _base_at_level(fx, level, prob.q)) / (2.0 * r_s)
        mass = _trapezoid(exact, x[1] - x[0])
        if abs(mass - 1.0) <= NORM_TOL or points >= MAX_OUTPUT_GRID:
            break
        points = _refine(points)
    # A density that climbs steeply inside the first cell next to a clip point
    # can defeat any affordable grid; rescale so the table is a valid pdf.
    f_lam = exact / mass
    mu = 2.0 * n * r_s * level ** (n - 1)
    for arr in (x, fx, f_lam, exact):
        arr.setflags(write=False)
    return DensitySolution(f_X, x, fx, f_lam, float(level), float(mu),
                           float(min(max(p_miss, 0.0), 1.0)), n, r_s, exact)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MissEstimate:
    estimate: float
    ci_halfwidth: float
    misses: int
    trials: int


def _window_mass(pdf: SpatialPdf, x: np.ndarray, r: float, boundary: str) -> np.ndarray:
    if boundary == "clip":
        return pdf.cdf(np.minimum(x + r, 1.0)) - pdf.cdf(np.maximum(x - r, 0.0))
    mass = pdf.cdf(np.minimum(x + r, 1.0)) - pdf.cdf(np.maximum(x - r, 0.0))
    mass = mass + np.where(x - r < 0, 1.0 - pdf.cdf(1.0 + x - r), 0.0)
    mass = mass + np.where(x + r > 1, pdf.cdf(x + r - 1.0), 0.0)
    return np.minimum(mass, 1.0)


def count_misses(f_X: SpatialPdf, f_lambda: SpatialPdf, n: int, r_s: float, trials: int,
                 rng: np.random.Generator, method: str = "direct", boundary: str = "clip",
                 chunk_elems: int = 4_000_000) -> int:
    """Number of trials in which no sensor lies within ``r_s`` of the transmitter.

    ``method="direct"`` draws all ``n`` sensor positions per trial.
    ``method="binomial"`` draws the transmitter and then decides the miss
    event directly with probability ``(1 - q)^n`` where ``q`` is the sensor
    mass of the transmitter's window; this has the same distribution and
    costs O(1) per trial.  ``boundary="clip"`` measures distance on the
    segment, ``boundary="wrap"`` on the unit circle (no edge effects).
    """
    if method not in ("direct", "binomial"):
        raise ValueError(f"unknown method {method!r}")
    if boundary not in ("clip", "wrap"):
        raise ValueError(f"unknown boundary {boundary!r}")
    if n == 0:
        return int(trials)
    misses = 0
    if method == "binomial":
        chunk = max(1, chunk_elems)
        done = 0
        while done < trials:
            c = min(chunk, trials - done)
            x = f_X.ppf(rng.random(c))
            q = _window_mass(f_lambda, x, r_s, boundary)
            p = np.exp(n * np.log1p(-np.minimum(q, 1.0)))
            misses += int(np.count_nonzero(rng.random(c) < p))
            done += c
        return misses
    chunk = max(1, chunk_elems // n)
    done = 0
    while done < trials:
        c = min(chunk, trials - done)
        x = f_X.ppf(rng.random(c))
        s = f_lambda.ppf(rng.random((c, n)))
        dist = np.abs(s - x[:, None])
        if boundary == "wrap":
            dist = np.minimum(dist, 1.0 - dist)
        misses += int(np.count_nonzero(np.all(dist > r_s, axis=1)))
        done += c
    return misses


def miss_probability_empirical(f_X: SpatialPdf, f_lambda: SpatialPdf, n: int, r_s: float,
                               trials: int, rng: np.random.Generator, method: str = "direct",
                               boundary: str = "clip") -> MissEstimate:
    """Monte Carlo miss probability with a normal-approximation 95% CI."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    misses = count_misses(f_X, f_lambda, n, r_s, trials, rng, method, boundary)
    p = misses / trials
    return MissEstimate(p, 1.96 * math.sqrt(p * (1.0 - p) / trials), misses, trials)


def edge_corrected_uniform_miss(n: int, r_s: float) -> float:
    """Exact miss probability for uniform sensors and transmitter on [0, 1].

    Accounts for the shortened detection window within ``r_s`` of either end
    (valid for ``r_s <= 1/2``).
    """
    a = (1.0 - 2.0 * r_s) ** (n + 1)
    return a + 2.0 * ((1.0 - r_s) ** (n + 1) - a) / (n + 1)
