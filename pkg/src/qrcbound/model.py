"""Multi-component model description and assumption checks.

Each component ``i`` renews with hazard ``phi(x_i) + mu_i(x)`` where ``x`` is
the vector of elapsed times of all components. ``phi`` is shared, ``Q`` bounds
every full hazard from above and ``q`` bounds every ``mu_i`` from below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidModelError
from .intensity import GeneralizedIntensity

__all__ = [
    "Rate",
    "ConstantRate",
    "ThresholdRate",
    "DecayRate",
    "TabulatedRate",
    "HazardRate",
    "SumRate",
    "CallableRate",
    "rate_from_dict",
    "ProcessSpec",
    "AssumptionReport",
]

GRID_POINTS = 10_000
CROSS_POINTS = 8
BRACKET_TOL = 1e-9


class Rate:
    """State-dependent additional intensity ``mu_i(x_1, ..., x_m)``."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise InvalidModelError(f"{type(self).__name__} cannot be serialized")


@dataclass(frozen=True)
class ConstantRate(Rate):
    value: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.value)

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class ThresholdRate(Rate):
    """``below`` while ``x[component] < cut``, ``above`` afterwards."""

    component: int
    cut: float
    below: float
    above: float

    def __call__(self, x):
        xj = np.asarray(x, dtype=float)[..., self.component]
        return np.where(xj < self.cut, self.below, self.above)

    def to_dict(self):
        return {"kind": "threshold", "component": self.component, "cut": self.cut, "below": self.below, "above": self.above}


@dataclass(frozen=True)
class DecayRate(Rate):
    """``low + (high - low) * exp(-x[component] / scale)``."""

    component: int
    low: float
    high: float
    scale: float

    def __call__(self, x):
        xj = np.asarray(x, dtype=float)[..., self.component]
        return self.low + (self.high - self.low) * np.exp(-xj / self.scale)

    def to_dict(self):
        return {"kind": "decay", "component": self.component, "low": self.low, "high": self.high, "scale": self.scale}


@dataclass(frozen=True)
class TabulatedRate(Rate):
    component: int
    knots: tuple
    values: tuple

    def __call__(self, x):
        xj = np.asarray(x, dtype=float)[..., self.component]
        return np.interp(xj, self.knots, self.values)

    def to_dict(self):
        return {"kind": "table", "component": self.component, "knots": list(self.knots), "values": list(self.values)}


@dataclass(frozen=True)
class HazardRate(Rate):
    """``scale * (upper.hazard - lower.hazard)`` evaluated at ``x[component]``."""

    component: int
    upper: GeneralizedIntensity
    lower: GeneralizedIntensity | None = None
    scale: float = 1.0

    def __call__(self, x):
        xj = np.asarray(x, dtype=float)[..., self.component]
        val = np.asarray(self.upper.hazard(xj), dtype=float)
        if self.lower is not None:
            val = val - np.asarray(self.lower.hazard(xj), dtype=float)
        return self.scale * np.maximum(val, 0.0)

    def to_dict(self):
        d = {"kind": "hazard", "component": self.component, "upper": self.upper.to_dict(), "scale": self.scale}
        if self.lower is not None:
            d["lower"] = self.lower.to_dict()
        return d


@dataclass(frozen=True)
class SumRate(Rate):
    parts: tuple

    def __call__(self, x):
        out = self.parts[0](x)
        for p in self.parts[1:]:
            out = out + p(x)
        return out

    def to_dict(self):
        return {"kind": "sum", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class CallableRate(Rate):
    fn: Callable

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


def rate_from_dict(d: dict) -> Rate:
    kind = d.get("kind")
    try:
        if kind == "constant":
            return ConstantRate(float(d["value"]))
        if kind == "threshold":
            return ThresholdRate(int(d["component"]), float(d["cut"]), float(d["below"]), float(d["above"]))
        if kind == "decay":
            return DecayRate(int(d["component"]), float(d["low"]), float(d["high"]), float(d["scale"]))
        if kind == "table":
            return TabulatedRate(int(d["component"]), tuple(map(float, d["knots"])), tuple(map(float, d["values"])))
        if kind == "hazard":
            lower = GeneralizedIntensity.from_dict(d["lower"]) if "lower" in d else None
            return HazardRate(int(d["component"]), GeneralizedIntensity.from_dict(d["upper"]), lower, float(d.get("scale", 1.0)))
        if kind == "sum":
            return SumRate(tuple(rate_from_dict(p) for p in d["parts"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModelError(f"bad rate entry {d!r}") from exc
    raise InvalidModelError(f"unknown rate kind {kind!r}")


@dataclass
class AssumptionReport:
    verdicts: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v != "violated" for v in self.verdicts.values())


@dataclass(frozen=True)
class ProcessSpec:
    """The ``m``-component generalized modulated renewal model.

    Parameters
    ----------
    m : int
        Number of components.
    phi : GeneralizedIntensity
        Shared minimal hazard.
    Q : GeneralizedIntensity
        Shared majorant of every full hazard ``phi + mu_i``.
    mu : tuple of Rate
        Additional state-dependent intensities, one per component.
    k : float
        Moment order with ``E zeta**k < inf``; bounds are available for
        orders ``N <= k - 1``.
    q : GeneralizedIntensity
        Minorant of every ``mu_i``.
    """

    m: int
    phi: GeneralizedIntensity
    Q: GeneralizedIntensity
    mu: tuple
    k: float = 2.0
    q: GeneralizedIntensity = field(default_factory=GeneralizedIntensity.zero)

    def __post_init__(self):
        if self.m < 1:
            raise InvalidModelError("need at least one component")
        object.__setattr__(self, "mu", tuple(self.mu))
        if len(self.mu) != self.m:
            raise InvalidModelError(f"expected {self.m} rate handles, got {len(self.mu)}")
        if not self.k >= 2:
            raise InvalidModelError("moment order k must be >= 2")

    @classmethod
    def homogeneous(cls, m: int, phi, Q, mu: Rate | float = 0.0, k: float = 2.0, q=None) -> "ProcessSpec":
        rate = ConstantRate(float(mu)) if not isinstance(mu, Rate) else mu
        return cls(m, phi, Q, tuple([rate] * m), k, q if q is not None else GeneralizedIntensity.zero())

    def rates(self, x: np.ndarray) -> np.ndarray:
        """``mu_i(x)`` for every component, shape ``x.shape``."""
        x = np.asarray(x, dtype=float)
        return np.stack([np.asarray(r(x), dtype=float) * np.ones(x.shape[:-1]) for r in self.mu], axis=-1)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "phi": self.phi.to_dict(),
            "Q": self.Q.to_dict(),
            "q": self.q.to_dict(),
            "mu": [r.to_dict() for r in self.mu],
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSpec":
        try:
            m = int(d["m"])
            phi = GeneralizedIntensity.from_dict(d["phi"])
            Q = GeneralizedIntensity.from_dict(d["Q"])
            mu_raw = d.get("mu", {"kind": "constant", "value": 0.0})
            if isinstance(mu_raw, dict):
                mu_raw = [mu_raw] * m
            mu = tuple(rate_from_dict(r) for r in mu_raw)
            q = GeneralizedIntensity.from_dict(d["q"]) if "q" in d else GeneralizedIntensity.zero()
            k = float(d.get("k", 2.0))
        except KeyError as exc:
            raise InvalidModelError(f"model block is missing field {exc}") from exc
        return cls(m, phi, Q, mu, k, q)

    # -- validation ---------------------------------------------------------

    def grid(self, points: int = GRID_POINTS) -> np.ndarray:
        top = self.phi.tail_point(1e-9)
        if not math.isfinite(top):
            top = 1e6
        top = max(top, 2.0 * self.phi.delay_T + 1.0)
        g = np.concatenate([np.linspace(0.0, top, points // 2), np.geomspace(1e-9, top, points - points // 2)])
        return np.unique(g)

    def _states(self, s: np.ndarray, i: int) -> np.ndarray:
        others = np.concatenate([[0.0], np.geomspace(1e-3, float(s[-1]), CROSS_POINTS - 1)])
        if self.m == 1:
            return s[:, None]
        if self.m <= 3:
            mesh = np.meshgrid(*([others] * (self.m - 1)), indexing="ij")
            combos = np.stack([g.ravel() for g in mesh], axis=-1)
        else:
            combos = np.stack([np.roll(others, j) for j in range(self.m - 1)], axis=-1)
        n, c = s.size, combos.shape[0]
        states = np.empty((n * c, self.m))
        states[:, i] = np.repeat(s, c)
        cols = [j for j in range(self.m) if j != i]
        states[:, cols] = np.tile(combos, (n, 1))
        return states

    def check(self, points: int = GRID_POINTS) -> AssumptionReport:
        """Grid verification of the bracketing assumptions; never raises."""
        rep = AssumptionReport()
        s = self.grid(points)
        phi_s = np.asarray(self.phi.hazard(s))
        Q_s = np.asarray(self.Q.hazard(s))
        q_s = np.asarray(self.q.hazard(s))

        bad = []
        if np.any(phi_s < 0) or np.any(Q_s < 0) or np.any(q_s < 0):
            bad.append("negative hazard on grid")
        for b, w in zip(self.phi.atom_locs, self.phi.atom_weights):
            wq = [wq for a, wq in zip(self.Q.atom_locs, self.Q.atom_weights) if abs(a - b) <= 1e-12]
            if not wq or wq[0] < w:
                bad.append(f"phi atom at {b} not dominated by a Q atom")
        for i, r in enumerate(self.mu):
            st = self._states(s, i)
            mu_i = np.asarray(r(st), dtype=float) * np.ones(st.shape[0])
            si = st[:, i]
            lam = np.asarray(self.phi.hazard(si)) + mu_i
            over = lam > np.asarray(self.Q.hazard(si)) * (1 + BRACKET_TOL) + BRACKET_TOL
            if over.any():
                j = int(np.argmax(over))
                bad.append(f"component {i}: phi + mu = {lam[j]:.6g} exceeds Q at state {st[j].tolist()}")
            under = mu_i < np.asarray(self.q.hazard(si)) - BRACKET_TOL
            if under.any():
                j = int(np.argmax(under))
                rep.verdicts.setdefault("A6", "violated")
                bad.append(f"component {i}: mu = {mu_i[j]:.6g} below q at state {st[j].tolist()}")
            if np.any(mu_i < 0):
                bad.append(f"component {i}: negative mu")
        rep.verdicts["A2"] = "violated" if any("exceeds" in b or "atom" in b or "negative" in b for b in bad) else "ok"
        rep.verdicts.setdefault("A6", "ok")
        rep.warnings.extend(bad)

        rep.verdicts["A3-divergence"] = "ok" if self.phi.hazard_diverges() else "warning"
        if rep.verdicts["A3-divergence"] == "warning":
            rep.warnings.append("integral of phi did not exceed the divergence level; divergence unverified")
        mk = self.phi.moment(self.k)
        rep.verdicts["A3-moment"] = "ok" if math.isfinite(mk) else "violated"
        if not math.isfinite(mk):
            rep.warnings.append(f"moment of order k={self.k} of the phi-law is infinite")

        near0 = np.asarray(self.Q.hazard(s[s <= min(1e-3, s[-1])]))
        rep.verdicts["A4"] = "ok" if np.all(np.isfinite(near0)) else "violated"
        if rep.verdicts["A4"] == "violated":
            rep.warnings.append("Q is unbounded near zero")

        beyond = s > self.phi.delay_T
        rep.verdicts["A5"] = "ok" if np.all(phi_s[beyond] > 0) else "violated"
        if rep.verdicts["A5"] == "violated":
            rep.warnings.append(f"phi vanishes after delay_T={self.phi.delay_T}")
        return rep

    def validate(self, points: int = GRID_POINTS) -> AssumptionReport:
        """Like :meth:`check` but raise on bracket or positivity violations."""
        rep = self.check(points)
        hard = [k for k in ("A2", "A4", "A5", "A6") if rep.verdicts.get(k) == "violated"]
        if hard:
            raise InvalidModelError("model rejected (" + ", ".join(hard) + "): " + "; ".join(rep.warnings))
        return rep
