"""Analytic bound pipeline: overshoot bounds, coupling probabilities, K(N).

Notation follows the model: ``zeta`` has the law generated by ``phi``,
``xi`` the law generated by the majorant ``Q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import DegenerateCouplingError, InfeasibleOptimizationError
from .intensity import GeneralizedIntensity
from .model import ProcessSpec

__all__ = [
    "classical_lorden",
    "xi_bound",
    "pi0",
    "pi1",
    "geometric_moment",
    "residual_moment",
    "coupling_epoch_moment_bound",
    "stationary_tail",
    "stationary_residual_integral",
    "convergence_constant",
    "optimize_theta",
    "LordenBounds",
    "Breakdown",
    "compute_bounds",
]

A_GRID = 512
X_GRID = 2048
X_CHUNK = 2**20
SERIES_TOL = 1e-10


@lru_cache(maxsize=4096)
def _moment(gi: GeneralizedIntensity, order: float) -> float:
    return gi.moment(order)


def classical_lorden(law) -> float:
    """``E xi^2 / E xi`` for a law exposing ``moment``."""
    m1 = law.moment(1)
    m2 = law.moment(2)
    if not math.isfinite(m2):
        return math.inf
    return m2 / m1


def _check_order(spec: ProcessSpec, N: float):
    if not 0 < N <= spec.k - 1 + 1e-12:
        raise ValueError(f"order N={N} outside (0, k-1] with k={spec.k}")


def xi_bound(spec: ProcessSpec, N: float = 1.0) -> float:
    """``E zeta^N + E zeta^(N+1) / ((N+1) E xi)``; ``inf`` if a moment diverges."""
    _check_order(spec, N)
    ez_n = _moment(spec.phi, float(N))
    ez_n1 = _moment(spec.phi, float(N) + 1.0)
    exi = _moment(spec.Q, 1.0)
    if not (math.isfinite(ez_n) and math.isfinite(ez_n1)):
        return math.inf
    return ez_n + ez_n1 / ((N + 1.0) * exi)


def pi0(spec: ProcessSpec, theta: float) -> float:
    """Markov-inequality probability that one elapsed time is below ``theta``."""
    xi1 = xi_bound(spec, 1.0)
    if not theta > xi1:
        raise ValueError(f"threshold {theta} must exceed Xi(1) = {xi1}")
    return 1.0 - xi1 / theta


def _floor_density(spec: ProcessSpec, a: np.ndarray, x) -> np.ndarray:
    """``phi(a+x) * exp(-int_a^{a+x} Q)``, broadcasting ``a`` against ``x``."""
    ax = np.asarray(a + x, dtype=float)
    shape = ax.shape
    flat = ax.ravel()
    hq = np.asarray(spec.Q.total_hazard(flat)).reshape(shape) - np.asarray(spec.Q.total_hazard(np.ravel(a))).reshape(np.shape(a))
    with np.errstate(invalid="ignore", over="ignore"):
        f = np.asarray(spec.phi.hazard(flat)).reshape(shape) * np.exp(-hq)
    return np.where(np.isnan(f), 0.0, f)


def _edges(upper: float, extra: Sequence[float] = ()) -> list[float]:
    edges = {0.0, upper}
    e = 1.0 / 64
    while e < upper:
        edges.add(e)
        e *= 2.0
    edges.update(x for x in extra if 0 < x < upper)
    return sorted(edges)


def _pi1_on_grid(spec: ProcessSpec, theta: float, points: int, nx: int) -> float:
    a = np.linspace(0.0, theta, points)
    upper = spec.Q.tail_point(1e-12)
    if not math.isfinite(upper):
        upper = 1e6
    kinks = [k for k in (spec.phi.delay_T, *spec.phi.atom_locs, *spec.Q.atom_locs) if 0 < k < upper]
    x = np.unique(np.concatenate([np.linspace(0.0, upper, nx), np.geomspace(upper * 1e-9, upper, nx // 4), kinks]))
    floor = np.empty(x.size)
    step = max(1, X_CHUNK // points)
    for lo in range(0, x.size, step):
        xs = x[lo : lo + step]
        floor[lo : lo + step] = _floor_density(spec, a[:, None], xs[None, :]).min(axis=0)
    return float(integrate.trapezoid(floor, x))


def pi1(spec: ProcessSpec, theta: float, points: int = A_GRID) -> float:
    """Conservative ``inf_{a in [0, theta]}`` coupling mass of the density floors.

    Evaluated on ``points`` and ``2 * points`` elapsed-time grids; the gap
    between the two is subtracted as a discretization allowance.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    coarse = _pi1_on_grid(spec, theta, points, X_GRID)
    fine = _pi1_on_grid(spec, theta, 2 * points, 2 * X_GRID)
    val = min(fine, coarse) - abs(coarse - fine)
    val = min(val, 1.0)
    if not val > 0:
        raise DegenerateCouplingError(f"coupling probability bound is {val:.3g} at theta={theta}")
    return val


def geometric_moment(p: float, N: float, tol: float = SERIES_TOL) -> float:
    """``E (nu + 1)^N`` for ``nu`` geometric on ``{1, 2, ...}`` with success ``p``."""
    if not 0 < p <= 1:
        return math.inf
    if p == 1.0:
        return 2.0**N
    q = 1.0 - p
    total = 0.0
    start = 1
    chunk = 4096
    while True:
        j = np.arange(start, start + chunk, dtype=float)
        terms = (j + 1.0) ** N * p * np.exp((j - 1.0) * math.log(q))
        total += float(terms.sum())
        jn = start + chunk
        ratio = ((jn + 2.0) / (jn + 1.0)) ** N * q
        nxt = (jn + 1.0) ** N * p * math.exp((jn - 1.0) * math.log(q))
        if ratio < 1.0 and nxt / (1.0 - ratio) < tol:
            return total
        start = jn
        if start > 10**9:
            return math.inf


def residual_moment(spec: ProcessSpec, a: float, N: float) -> float:
    """Upper bound on ``E (residual at elapsed a)^N``.

    The full hazard is at least ``phi``, so the residual is stochastically
    dominated by the residual of the ``phi``-law.
    """
    if a == 0:
        return _moment(spec.phi, float(N))
    return _moment(spec.phi.residual(float(a)), float(N))


def coupling_epoch_moment_bound(
    spec: ProcessSpec,
    a: Sequence[float],
    N: float,
    theta: float,
    pi1_value: float | None = None,
    a_hat: Sequence[float] | None = None,
) -> float:
    """``T(a_1..a_m)_N``: bound on ``E tau^N`` for the coupling epoch.

    With ``a_hat`` the residual terms of both starting states are included and
    the Jensen prefactor grows accordingly.
    """
    _check_order(spec, N)
    starts = list(a) + (list(a_hat) if a_hat is not None else [])
    p = _pipeline_pi(spec, theta, pi1_value)
    xi_n = xi_bound(spec, N)
    ez_n = _moment(spec.phi, float(N))
    res = sum(residual_moment(spec, float(x), N) for x in starts)
    geo = geometric_moment(p, N)
    parts = (res, geo, xi_n, ez_n)
    if not all(math.isfinite(v) for v in parts):
        return math.inf
    pref = (len(starts) + 2.0) ** (N - 1.0)
    return pref * (res + geo * xi_n**N + ez_n)


def _pipeline_pi(spec: ProcessSpec, theta: float, pi1_value: float | None = None) -> float:
    p1 = pi1(spec, theta) if pi1_value is None else pi1_value
    p0 = pi0(spec, theta) ** spec.m
    return p0 * p0 * p1


def stationary_tail(spec: ProcessSpec, s: float, clamp: bool = True) -> float:
    """``int_0^s (1 - Phi) / int_0^inf (1 - G)``, clamped to ``[0, 1]``."""
    if s < 0:
        raise ValueError("s must be >= 0")
    den = _moment(spec.Q, 1.0)
    if not (den > 0 and math.isfinite(den)):
        from .errors import InvalidModelError

        raise InvalidModelError("majorant law has degenerate mean")
    if s == 0:
        return 0.0
    upper = min(s, spec.phi.tail_point(1e-14))
    num = 0.0
    for lo, hi in zip(_edges(upper)[:-1], _edges(upper)[1:]):
        v, _ = integrate.quad(lambda u: float(spec.phi.survival(u)), lo, hi, epsabs=1e-13, epsrel=1e-10, limit=200)
        num += v
    raw = num / den
    return min(max(raw, 0.0), 1.0) if clamp else raw


@lru_cache(maxsize=256)
def _stationary_residual_integral(spec: ProcessSpec, N: float) -> float:
    den = _moment(spec.Q, 1.0)
    upper = spec.phi.tail_point(1e-12)
    if not math.isfinite(upper):
        return math.inf

    def integrand(x):
        s = float(spec.phi.survival(x))
        if s <= 0:
            return 0.0
        return residual_moment(spec, x, N) * s / den

    total = 0.0
    edges = _edges(upper, spec.phi.atom_locs)
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(integrand, lo, hi, epsabs=1e-10, epsrel=1e-7, limit=100)
        total += v
    return total


def _stationary_residual_closed(spec: ProcessSpec, N: float) -> float:
    # swapping the order of integration turns the residual integral into a moment
    ez = _moment(spec.phi, float(N) + 1.0)
    if not math.isfinite(ez):
        return math.inf
    return ez / ((N + 1.0) * _moment(spec.Q, 1.0))


def stationary_residual_integral(spec: ProcessSpec, N: float) -> float:
    """``int_0^inf M(a) (1 - Phi(a)) da / E xi`` with ``M`` the residual moment."""
    if not math.isfinite(_moment(spec.phi, float(N) + 1.0)):
        return math.inf
    return _stationary_residual_integral(spec, float(N))


@dataclass
class Breakdown:
    """Every intermediate quantity behind one K(N) evaluation."""

    N: float
    theta: float
    xi1: float = math.nan
    xiN: float = math.nan
    ezN: float = math.nan
    exi: float = math.nan
    pi0: float = math.nan
    p0: float = math.nan
    pi1: float = math.nan
    pi: float = math.nan
    geo: float = math.nan
    residual: float = math.nan
    K: float = math.inf
    failing: str | None = None

    def rows(self) -> list[tuple[str, str, float, float]]:
        tol = 1e-8
        return [
            ("Xi", "Xi(1)", self.xi1, tol),
            ("Xi", f"Xi({self.N:g})", self.xiN, tol),
            ("moment", f"E zeta^{self.N:g}", self.ezN, tol),
            ("moment", "E xi", self.exi, tol),
            ("threshold", "Theta", self.theta, 0.0),
            ("probability", "pi0", self.pi0, tol),
            ("probability", "p0", self.p0, tol),
            ("probability", "pi1", self.pi1, 1e-6),
            ("probability", "pi", self.pi, 1e-6),
            ("moment", f"E(nu+1)^{self.N:g}", self.geo, SERIES_TOL),
            ("integral", "stationary residual term", self.residual, 1e-7),
            ("constant", f"K({self.N:g})", self.K, 1e-6),
        ]


def convergence_constant(spec: ProcessSpec, N: float, theta: float, pi1_value: float | None = None) -> tuple[float, Breakdown]:
    """``K(N)``: ``T(a)_N`` integrated over the stationary bound of each coordinate.

    ``T`` is a sum of per-coordinate residual terms plus constants, so only the
    one-dimensional stationary bound enters. The constants carry unit mass.
    """
    _check_order(spec, N)
    br = Breakdown(N=float(N), theta=float(theta))
    br.xi1 = xi_bound(spec, 1.0)
    br.xiN = xi_bound(spec, N)
    br.ezN = _moment(spec.phi, float(N))
    br.exi = _moment(spec.Q, 1.0)
    if not math.isfinite(br.xiN):
        br.failing = f"Xi({N:g}) (E zeta^{N + 1:g} diverges)"
        return math.inf, br
    br.pi0 = pi0(spec, theta)
    br.p0 = br.pi0**spec.m
    try:
        br.pi1 = pi1(spec, theta) if pi1_value is None else pi1_value
    except DegenerateCouplingError:
        br.pi1 = 0.0
        br.failing = "pi1 (no coupling mass)"
        return math.inf, br
    br.pi = br.p0 * br.p0 * br.pi1
    br.geo = geometric_moment(br.pi, N)
    if not math.isfinite(br.geo):
        br.failing = "E(nu+1)^N"
        return math.inf, br
    br.residual = _stationary_residual_closed(spec, N)
    if not math.isfinite(br.residual):
        br.failing = "stationary residual term"
        return math.inf, br
    pref = (spec.m + 2.0) ** (N - 1.0)
    br.K = pref * (spec.m * br.residual + br.geo * br.xiN**N + br.ezN)
    return br.K, br


def optimize_theta(
    spec: ProcessSpec,
    N: float,
    theta_max: float | None = None,
    grid: int = 16,
) -> tuple[float, float]:
    """Minimize ``K(N)`` over ``theta`` in ``(Xi(1), theta_max]``.

    Log-spaced scan followed by golden-section refinement around the best
    scan point. Deterministic for fixed ``grid`` and ``theta_max``.
    """
    xi1 = xi_bound(spec, 1.0)
    if not math.isfinite(xi1):
        raise InfeasibleOptimizationError("Xi(1) is infinite")
    if theta_max is None:
        theta_max = 100.0 * xi1
    if not theta_max > xi1:
        raise InfeasibleOptimizationError("empty threshold interval")
    thetas = np.geomspace(xi1 * (1.0 + 1e-3), theta_max, grid)

    @lru_cache(maxsize=None)
    def K(th: float) -> float:
        return convergence_constant(spec, N, th)[0]

    vals = np.array([K(float(t)) for t in thetas])
    if not np.any(np.isfinite(vals)):
        raise InfeasibleOptimizationError("K(N) is infinite for every threshold in the interval")
    i = int(np.nanargmin(np.where(np.isfinite(vals), vals, np.inf)))
    lo = float(thetas[max(i - 1, 0)])
    hi = float(thetas[min(i + 1, grid - 1)])
    if hi - lo <= 0:
        return float(thetas[i]), float(vals[i])
    res = optimize.minimize_scalar(lambda t: K(float(t)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-3 * hi})
    best_t, best_k = float(thetas[i]), float(vals[i])
    if np.isfinite(res.fun) and res.fun < best_k:
        best_t, best_k = float(res.x), float(res.fun)
    return best_t, best_k


@dataclass
class LordenBounds:
    """Computed analytic quantities for one model at one threshold."""

    spec: ProcessSpec
    theta: float
    p0: float
    pi1: float
    pi: float
    breakdowns: dict = field(default_factory=dict)

    def Xi(self, N: float) -> float:
        return xi_bound(self.spec, N)

    def pi0(self, theta: float) -> float:
        return pi0(self.spec, theta)

    def T_of_a(self, a: Sequence[float], N: float, a_hat: Sequence[float] | None = None) -> float:
        return coupling_epoch_moment_bound(self.spec, a, N, self.theta, self.pi1, a_hat)

    def K(self, N: float) -> float:
        if N not in self.breakdowns:
            self.breakdowns[N] = convergence_constant(self.spec, N, self.theta, self.pi1)[1]
        return self.breakdowns[N].K

    def stationary_tail(self, s: float) -> float:
        return stationary_tail(self.spec, s)


def compute_bounds(spec: ProcessSpec, theta: float | str = "auto", N: float = 1.0) -> LordenBounds:
    """Assemble :class:`LordenBounds`; ``theta="auto"`` optimizes ``K(N)``."""
    if theta == "auto":
        theta, _ = optimize_theta(spec, N)
    theta = float(theta)
    p0 = pi0(spec, theta) ** spec.m
    p1 = pi1(spec, theta)
    return LordenBounds(spec, theta, p0, p1, p0 * p0 * p1)
