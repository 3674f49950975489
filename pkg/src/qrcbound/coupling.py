"""Maximal coupling of finitely many laws on the real line.

A law here is anything exposing ``pdf(x)`` (density of the absolutely
continuous part), ``cont_cdf(x)`` (its integral from the lower support end),
``atoms`` (``(location, mass)`` pairs), ``support`` and ``upper()``.
:class:`~qrcbound.intensity.DistributionView` satisfies this.

The joint sampler draws ``n + 1`` uniforms. With probability ``kappa`` every
coordinate is the same draw from the normalized pointwise minimum of the
densities, otherwise coordinate ``i`` is drawn from its own leftover law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import CouplerConstructionError

__all__ = [
    "MaximalCoupler",
    "common_part",
    "build_coupler",
    "joint_sample",
    "rejection_coupling",
]

GRID_POINTS = 10_000
CROSS_TOL = 1e-10
ATOM_TOL = 1e-12
MASS_TOL = 1e-6
KAPPA_ONE = 1e-9


def _shared_atoms(laws) -> list[tuple[float, float]]:
    first = list(laws[0].atoms)
    out = []
    for loc, mass in first:
        masses = [mass]
        for law in laws[1:]:
            hit = [m for b, m in law.atoms if abs(b - loc) <= ATOM_TOL]
            if not hit:
                break
            masses.append(hit[0])
        else:
            out.append((loc, min(masses)))
    return out


def _grid(lo: float, hi: float, extra: Sequence[float]) -> np.ndarray:
    span = hi - lo
    g = np.concatenate(
        [
            np.linspace(lo, hi, GRID_POINTS // 2),
            lo + np.geomspace(span * 1e-9, span, GRID_POINTS // 2),
            [x for x in extra if lo <= x <= hi],
        ]
    )
    return np.unique(g)


def _segments(laws):
    """Split the support into pieces where one law attains the pointwise minimum."""
    lo = min(law.support[0] for law in laws)
    hi = max(law.upper() for law in laws)
    breaks = [lo, hi]
    for law in laws:
        breaks.extend(b for b, _ in law.atoms)
        end = law.support[1]
        if math.isfinite(end):
            breaks.append(end)
    grid = _grid(lo, hi, breaks)
    mids = 0.5 * (grid[1:] + grid[:-1])
    dens = np.vstack([np.asarray(law.pdf(mids), dtype=float) for law in laws])
    arg = np.argmin(dens, axis=0)

    cuts = [grid[0]]
    owners = []
    for k in range(mids.size):
        j = int(arg[k])
        if owners and owners[-1] != j:
            i_prev = owners[-1]
            a, b = grid[k - 1], grid[k + 1]
            # a crossing lies near grid[k]; refine where the two densities meet
            x0 = float(grid[k])
            f = lambda x: float(laws[i_prev].pdf(x)) - float(laws[j].pdf(x))
            fa, fb = f(mids[k - 1]), f(mids[k])
            if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
                x0 = optimize.brentq(f, mids[k - 1], mids[k], xtol=CROSS_TOL)
            x0 = min(max(x0, a), b)
            cuts.append(x0)
        if not owners or owners[-1] != j:
            owners.append(j)
    cuts.append(grid[-1])
    return np.asarray(cuts), np.asarray(owners, dtype=int)


@dataclass
class MaximalCoupler:
    """Prepared joint sampler for ``n`` laws with common part ``kappa``."""

    laws: tuple
    kappa: float
    cuts: np.ndarray
    owners: np.ndarray
    seg_mass: np.ndarray
    shared_atoms: tuple
    leftover_mass: tuple

    @property
    def n(self) -> int:
        return len(self.laws)

    # -- common law ---------------------------------------------------------

    def common_cdf(self, s) -> np.ndarray:
        """Unnormalized ``int_{-inf}^s min_i phi_i``, atoms included."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        cum = np.concatenate([[0.0], np.cumsum(self.seg_mass)])
        k = np.clip(np.searchsorted(self.cuts, s, side="right") - 1, 0, self.owners.size)
        out = np.where(k >= self.owners.size, cum[-1], 0.0)
        inside = k < self.owners.size
        for j in range(self.n):
            sel = inside & (self.owners[np.minimum(k, self.owners.size - 1)] == j)
            if not sel.any():
                continue
            kk = k[sel]
            law = self.laws[j]
            left = np.asarray(law.cont_cdf(self.cuts[kk]), dtype=float)
            out[sel] = cum[kk] + np.asarray(law.cont_cdf(s[sel]), dtype=float) - left
        out = np.where(s < self.cuts[0], 0.0, out)
        for loc, mass in self.shared_atoms:
            out = out + np.where(s >= loc, mass, 0.0)
        return out

    def common_quantile(self, u) -> np.ndarray:
        """Quantile of the normalized common law."""
        v = np.atleast_1d(np.asarray(u, dtype=float)) * self.kappa
        return _generalized_inverse(self.common_cdf, v, self.cuts[0], self.cuts[-1], [a for a, _ in self.shared_atoms])

    # -- leftover laws ------------------------------------------------------

    def leftover_cdf(self, i: int, s) -> np.ndarray:
        law = self.laws[i]
        s = np.atleast_1d(np.asarray(s, dtype=float))
        atoms = np.zeros_like(s)
        for loc, mass in law.atoms:
            atoms = atoms + np.where(s >= loc, mass, 0.0)
        raw = np.asarray(law.cont_cdf(s), dtype=float) + atoms - self.common_cdf(s)
        return np.maximum(raw, 0.0) / (1.0 - self.kappa)

    def leftover_quantile(self, i: int, u) -> np.ndarray:
        law = self.laws[i]
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return _generalized_inverse(
            lambda s: self.leftover_cdf(i, s), u, law.support[0], law.upper(), [a for a, _ in law.atoms]
        )

    def joint_sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw ``(values, coincided)``; values has shape ``(n,)`` or ``(size, n)``."""
        k = 1 if size is None else int(size)
        u = rng.random((k, self.n + 1))
        common = u[:, -1] <= self.kappa
        values = np.empty((k, self.n))
        if common.any():
            values[common, :] = self.common_quantile(u[common, 0])[:, None]
        rest = ~common
        if rest.any():
            for i in range(self.n):
                values[rest, i] = self.leftover_quantile(i, u[rest, i])
        if size is None:
            return values[0], bool(common[0])
        return values, common


def _generalized_inverse(F: Callable, target: np.ndarray, lo: float, hi: float, atoms: Sequence[float]) -> np.ndarray:
    """Smallest ``s`` in ``[lo, hi]`` with ``F(s) >= target``, snapping to atoms."""
    a = np.full_like(target, lo)
    b = np.full_like(target, hi)
    for _ in range(200):
        mid = 0.5 * (a + b)
        ok = F(mid) >= target
        b = np.where(ok, mid, b)
        a = np.where(ok, a, mid)
        if np.all(b - a <= 1e-12 * np.maximum(1.0, np.abs(b))):
            break
    for loc in atoms:
        snap = (a <= loc) & (loc <= b + 1e-12 * max(1.0, abs(loc))) & (F(np.full_like(b, loc)) >= target)
        b = np.where(snap, loc, b)
    return b


def _prepare(laws):
    if len(laws) < 2:
        raise ValueError("coupling needs at least two laws")
    cuts, owners = _segments(laws)
    seg_mass = np.array(
        [
            max(float(laws[j].cont_cdf(cuts[k + 1])) - float(laws[j].cont_cdf(cuts[k])), 0.0)
            for k, j in enumerate(owners)
        ]
    )
    shared = tuple(_shared_atoms(laws))
    kappa = float(seg_mass.sum() + sum(m for _, m in shared))
    return cuts, owners, seg_mass, shared, min(max(kappa, 0.0), 1.0)


def common_part(laws: Sequence) -> float:
    """``kappa = int min_i phi_i + sum over shared atoms of the smallest mass``."""
    return _prepare(list(laws))[-1]


def build_coupler(laws: Sequence) -> MaximalCoupler:
    laws = tuple(laws)
    cuts, owners, seg_mass, shared, kappa = _prepare(list(laws))
    if 1.0 - kappa < KAPPA_ONE:
        kappa = 1.0
    c = MaximalCoupler(laws, kappa, cuts, owners, seg_mass, shared, ())
    if kappa < 1.0:
        masses = []
        for i, law in enumerate(laws):
            total = float(law.cont_cdf(law.upper())) + sum(m for _, m in law.atoms)
            left = (total - kappa) / (1.0 - kappa)
            if abs(left - 1.0) > MASS_TOL:
                raise CouplerConstructionError(
                    f"leftover law {i} has mass {left:.9f} after removing common part {kappa:.9f} "
                    f"(law mass {total:.9f})"
                )
            masses.append(left)
        c.leftover_mass = tuple(masses)
    return c


def joint_sample(c: MaximalCoupler, rng: np.random.Generator, size: int | None = None):
    return c.joint_sample(rng, size)


def rejection_coupling(sample_p, density_p, sample_q, density_q, rng: np.random.Generator, max_iter: int = 100_000):
    """Two-law maximal coupling needing only samplers and densities.

    Returns ``(x, y, coincided)``; ``P{x == y}`` equals the common part of the
    two laws. Densities must be taken against the same dominating measure.
    """
    x = sample_p(rng)
    px = density_p(x)
    if rng.random() * px <= density_q(x):
        return x, x, True
    for _ in range(max_iter):
        y = sample_q(rng)
        qy = density_q(y)
        if rng.random() * qy > density_p(y):
            return x, y, False
    raise CouplerConstructionError("rejection coupling did not terminate")
