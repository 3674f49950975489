"""Generalized intensities: hazard rates with point-mass atoms.

A positive random variable is described by a continuous hazard ``lam(s)`` and a
finite list of atoms ``(a_i, w_i)``. The atom mass ``w_i`` is the conditional
probability of firing exactly at ``a_i`` given survival up to ``a_i``; it is
stored internally as the weight ``-log(1 - w_i)`` so that

    P{xi > x} = exp(-int_0^x lam(s) ds - sum_{a_i <= x} weight_i).

The continuous part is drawn from a closed family of shapes whose cumulative
hazards have closed forms, so distribution functions, quantiles and residual
laws are exact up to floating point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConditioningError, InvalidModelError, NumericError

__all__ = [
    "Term",
    "Constant",
    "Power",
    "Piecewise",
    "Rational",
    "Shifted",
    "Spliced",
    "GeneralizedIntensity",
    "DistributionView",
    "SaturationWarning",
    "cdf_from_intensity",
    "superpose_min",
    "sample",
    "moment",
    "residual_intensity",
    "term_from_dict",
]

ATOM_TOL = 1e-12
TAIL_TOL = 1e-12
QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8
DIVERGENCE_LEVEL = 50.0
_MAX_BRACKET = 2.0**60


class SaturationWarning(RuntimeWarning):
    """Cumulative hazard overflowed at a finite time inside the support."""


def _out(arr, scalar: bool):
    if scalar:
        return float(arr)
    return arr


# ---------------------------------------------------------------------------
# hazard shapes
# ---------------------------------------------------------------------------


class Term:
    """One additive piece of a continuous hazard."""

    support_end = math.inf

    def rate(self, s):
        raise NotImplementedError

    def cumulative(self, x):
        raise NotImplementedError

    def inverse(self, h):
        """Smallest ``x`` with ``cumulative(x) >= h``; ``None`` if no closed form."""
        return None

    @property
    def limit(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Term):
    c: float

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise InvalidModelError(f"constant hazard must be finite and >= 0, got {self.c}")

    def rate(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.c)

    def cumulative(self, x):
        x = np.asarray(x, dtype=float)
        return self.c * np.maximum(x, 0.0)

    def inverse(self, h):
        h = np.asarray(h, dtype=float)
        if self.c == 0:
            return np.where(h > 0, np.inf, 0.0)
        return np.maximum(h, 0.0) / self.c

    @property
    def limit(self):
        return math.inf if self.c > 0 else 0.0

    def to_dict(self):
        return {"shape": "constant", "params": [self.c]}


@dataclass(frozen=True)
class Power(Term):
    """Weibull-type hazard ``c * s**p`` with ``p > -1``."""

    c: float
    p: float

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise InvalidModelError(f"power hazard scale must be >= 0, got {self.c}")
        if not self.p > -1:
            raise InvalidModelError(f"power hazard exponent must exceed -1, got {self.p}")

    def rate(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return self.c * np.power(np.maximum(s, 0.0), self.p)

    def cumulative(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.c * np.power(x, self.p + 1.0) / (self.p + 1.0)

    def inverse(self, h):
        h = np.maximum(np.asarray(h, dtype=float), 0.0)
        if self.c == 0:
            return np.where(h > 0, np.inf, 0.0)
        return np.power((self.p + 1.0) * h / self.c, 1.0 / (self.p + 1.0))

    @property
    def limit(self):
        return math.inf if self.c > 0 else 0.0

    def to_dict(self):
        return {"shape": "power", "params": [self.c, self.p]}


@dataclass(frozen=True)
class Piecewise(Term):
    """Piecewise-linear hazard through ``(s_k, v_k)``, flat after the last knot."""

    knots: tuple
    values: tuple
    _s: np.ndarray = field(init=False, repr=False, compare=False)
    _v: np.ndarray = field(init=False, repr=False, compare=False)
    _c: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.size < 1 or s.size != v.size:
            raise InvalidModelError("piecewise hazard needs matching knot and value lists")
        if s[0] != 0.0:
            raise InvalidModelError("piecewise hazard must start at s = 0")
        if np.any(np.diff(s) <= 0):
            raise InvalidModelError("piecewise knots must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidModelError("piecewise hazard values must be finite and >= 0")
        c = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(s))])
        object.__setattr__(self, "knots", tuple(float(a) for a in s))
        object.__setattr__(self, "values", tuple(float(a) for a in v))
        object.__setattr__(self, "_s", s)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_c", c)

    @classmethod
    def from_arrays(cls, s, v) -> "Piecewise":
        return cls(tuple(np.asarray(s, dtype=float)), tuple(np.asarray(v, dtype=float)))

    def rate(self, s):
        return np.interp(np.maximum(np.asarray(s, dtype=float), 0.0), self._s, self._v)

    def cumulative(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        s, v, c = self._s, self._v, self._c
        n = s.size
        k = np.clip(np.searchsorted(s, x, side="right") - 1, 0, n - 1)
        dx = x - s[k]
        if n == 1:
            return v[0] * dx
        kk = np.minimum(k, n - 2)
        slope = (v[kk + 1] - v[kk]) / (s[kk + 1] - s[kk])
        slope = np.where(k == n - 1, 0.0, slope)
        return c[k] + v[k] * dx + 0.5 * slope * dx * dx

    def inverse(self, h):
        h = np.maximum(np.asarray(h, dtype=float), 0.0)
        s, v, c = self._s, self._v, self._c
        n = s.size
        k = np.clip(np.searchsorted(c, h, side="right") - 1, 0, n - 1)
        r = h - c[k]
        if n > 1:
            kk = np.minimum(k, n - 2)
            slope = (v[kk + 1] - v[kk]) / (s[kk + 1] - s[kk])
        else:
            kk = k
            slope = np.zeros_like(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            den = v[k] + np.sqrt(np.maximum(v[k] ** 2 + 2.0 * slope * r, 0.0))
            inner = np.where(den > 0, 2.0 * r / den, np.where(r > 0, np.inf, 0.0))
            tail = np.where(v[-1] > 0, r / v[-1], np.where(r > 0, np.inf, 0.0))
        d = np.where(k == n - 1, tail, inner)
        return s[k] + d

    @property
    def limit(self):
        return math.inf if self._v[-1] > 0 else float(self._c[-1])

    def to_dict(self):
        return {"shape": "piecewise", "params": [[a, b] for a, b in zip(self.knots, self.values)]}


# Taylor coefficients of log1p(u)/u and (u - log1p(u))/u^2
_LOG_RATIO = tuple((-1) ** k / (k + 1) for k in range(9))
_GAP_RATIO = tuple((-1) ** k / (k + 2) for k in range(9))


def _series(u, coeffs):
    out = np.zeros_like(u)
    for c in reversed(coeffs):
        out = out * u + c
    return out


@dataclass(frozen=True)
class Rational(Term):
    """Hazard ``(a0 + a1 s) / (b0 + b1 s)``.

    With ``b1 < 0`` the hazard blows up at ``-b0/b1``, which ends the support
    (e.g. ``1/(1 - s)`` is the uniform law on ``[0, 1)``).
    """

    a0: float
    a1: float
    b0: float
    b1: float

    def __post_init__(self):
        if not self.b0 > 0:
            raise InvalidModelError("rational hazard needs b0 > 0")
        if self.a0 < 0:
            raise InvalidModelError("rational hazard must be >= 0 at s = 0")
        end = self.support_end
        if math.isfinite(end):
            if not self.a0 + self.a1 * end > 0:
                raise InvalidModelError("rational hazard numerator must stay positive up to the pole")
        elif self.a1 < 0:
            raise InvalidModelError("rational hazard becomes negative for large s")

    @property
    def support_end(self):
        return -self.b0 / self.b1 if self.b1 < 0 else math.inf

    def rate(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        den = self.b0 + self.b1 * s
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, (self.a0 + self.a1 * s) / den, np.inf)

    def cumulative(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if self.b1 == 0:
            return (self.a0 * x + 0.5 * self.a1 * x * x) / self.b0
        # with c = b1/b0 and u = c x: b0 H = a0 x log1p(u)/u + a1 x^2 (u - log1p(u))/u^2,
        # both ratios taken by series near u = 0 to avoid cancellation
        c = self.b1 / self.b0
        u = c * x
        small = np.abs(u) < 1e-2
        us = np.where(small, u, 0.0)
        ul = np.where(small, 0.5, np.maximum(u, -1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log1p(ul)
            r1 = np.where(small, _series(us, _LOG_RATIO), lg / ul)
            r2 = np.where(small, _series(us, _GAP_RATIO), (ul - lg) / (ul * ul))
            val = (self.a0 * x * r1 + self.a1 * x * x * r2) / self.b0
        return np.where(u > -1.0, val, np.inf)

    @property
    def limit(self):
        if math.isfinite(self.support_end):
            return math.inf
        if self.a1 > 0:
            return math.inf
        if self.b1 > 0:
            return math.inf if self.a0 > 0 else 0.0
        return math.inf if self.a0 > 0 else 0.0

    def to_dict(self):
        return {"shape": "rational", "params": [self.a0, self.a1, self.b0, self.b1]}


@dataclass(frozen=True)
class Shifted(Term):
    """``s -> base(offset + s)``, the hazard seen after ``offset`` time has elapsed."""

    base: Term
    offset: float

    def rate(self, s):
        return self.base.rate(np.asarray(s, dtype=float) + self.offset)

    def cumulative(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.base.cumulative(x + self.offset) - float(self.base.cumulative(self.offset))

    def inverse(self, h):
        h0 = float(self.base.cumulative(self.offset))
        y = self.base.inverse(np.asarray(h, dtype=float) + h0)
        if y is None:
            return None
        return np.maximum(y - self.offset, 0.0)

    @property
    def support_end(self):
        return self.base.support_end - self.offset

    @property
    def limit(self):
        return self.base.limit - float(self.base.cumulative(self.offset))

    def to_dict(self):
        d = self.base.to_dict()
        d["shift"] = self.offset
        return d


@dataclass(frozen=True)
class Spliced(Term):
    """Tabulated head on ``[0, at)`` continued by an analytic tail hazard."""

    head: Piecewise
    tail: Term
    at: float

    def rate(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.at, self.head.rate(s), self.tail.rate(s))

    def _tail_offset(self):
        return float(self.head.cumulative(self.at)) - float(self.tail.cumulative(self.at))

    def cumulative(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.where(
            x < self.at,
            self.head.cumulative(np.minimum(x, self.at)),
            self.tail.cumulative(np.maximum(x, self.at)) + self._tail_offset(),
        )

    def inverse(self, h):
        h = np.asarray(h, dtype=float)
        yt = self.tail.inverse(h - self._tail_offset())
        if yt is None:
            return None
        split = float(self.head.cumulative(self.at))
        return np.where(h <= split, self.head.inverse(np.minimum(h, split)), yt)

    @property
    def support_end(self):
        return self.tail.support_end

    @property
    def limit(self):
        return self.tail.limit + self._tail_offset()

    def to_dict(self):
        return {
            "shape": "spliced",
            "params": {"head": self.head.to_dict()["params"], "tail": self.tail.to_dict(), "at": self.at},
        }


def term_from_dict(d: dict) -> Term:
    shape = d.get("shape")
    params = d.get("params")
    try:
        if shape == "constant":
            (c,) = params
            term = Constant(float(c))
        elif shape == "power":
            c, p = params
            term = Power(float(c), float(p))
        elif shape == "piecewise":
            pts = np.asarray(params, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2:
                raise InvalidModelError("piecewise params must be a list of [s, value] pairs")
            term = Piecewise.from_arrays(pts[:, 0], pts[:, 1])
        elif shape == "rational":
            a0, a1, b0, b1 = params
            term = Rational(float(a0), float(a1), float(b0), float(b1))
        elif shape == "spliced":
            pts = np.asarray(params["head"], dtype=float)
            term = Spliced(Piecewise.from_arrays(pts[:, 0], pts[:, 1]), term_from_dict(params["tail"]), float(params["at"]))
        else:
            raise InvalidModelError(f"unknown hazard shape {shape!r}")
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, InvalidModelError):
            raise
        raise InvalidModelError(f"bad params for shape {shape!r}: {params!r}") from exc
    if "shift" in d and float(d["shift"]) != 0.0:
        term = Shifted(term, float(d["shift"]))
    return term


def _shift_term(term: Term, a: float) -> Term:
    if isinstance(term, Constant):
        return term
    if isinstance(term, Shifted):
        return Shifted(term.base, term.offset + a)
    return Shifted(term, a)


# ---------------------------------------------------------------------------
# generalized intensity
# ---------------------------------------------------------------------------


def _mass_to_weight(w: float) -> float:
    return math.inf if w >= 1.0 else -math.log1p(-w)


def _weight_to_mass(weight: float) -> float:
    return -math.expm1(-weight)


def _merged_head(terms):
    """Sum of tabulated heads when every term is spliced on the same knots."""
    if len(terms) < 2 or not all(isinstance(t, Spliced) for t in terms):
        return None
    first = terms[0]
    if any(t.at != first.at or t.head.knots != first.head.knots for t in terms):
        return None
    values = np.sum([t.head._v for t in terms], axis=0)
    return Piecewise.from_arrays(first.head._s, values), first.at


@dataclass(frozen=True)
class GeneralizedIntensity:
    """Continuous hazard terms plus atoms; describes one positive law.

    Parameters
    ----------
    terms : tuple of Term
        Additive pieces of the continuous hazard. Empty means the zero hazard.
    atom_locs : tuple of float
        Strictly increasing positive atom locations.
    atom_weights : tuple of float
        Atom weights ``-log(1 - w)``; ``inf`` encodes a certain firing.
    delay_T : float
        Time after which the continuous hazard is declared positive.
    """

    terms: tuple = ()
    atom_locs: tuple = ()
    atom_weights: tuple = ()
    delay_T: float = 0.0
    _locs: np.ndarray = field(init=False, repr=False, compare=False)
    _cw: np.ndarray = field(init=False, repr=False, compare=False)
    _head: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        terms = tuple(t for t in self.terms if not (isinstance(t, Constant) and t.c == 0))
        object.__setattr__(self, "terms", terms)
        locs = tuple(float(a) for a in self.atom_locs)
        weights = tuple(float(w) for w in self.atom_weights)
        if len(locs) != len(weights):
            raise InvalidModelError("atom locations and weights differ in length")
        if any(a <= 0 for a in locs):
            raise InvalidModelError("atoms must sit at strictly positive times")
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise InvalidModelError("atom locations must be strictly increasing")
        if any(not w > 0 for w in weights):
            raise InvalidModelError("atom masses must lie in (0, 1]")
        if not (self.delay_T >= 0 and math.isfinite(self.delay_T)):
            raise InvalidModelError("delay_T must be finite and >= 0")
        object.__setattr__(self, "atom_locs", locs)
        object.__setattr__(self, "atom_weights", weights)
        object.__setattr__(self, "_locs", np.asarray(locs, dtype=float))
        object.__setattr__(self, "_cw", np.cumsum(np.asarray(weights, dtype=float)))
        object.__setattr__(self, "_head", _merged_head(terms))

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, terms: Iterable[Term] = (), atoms: Sequence = (), delay_T: float = 0.0) -> "GeneralizedIntensity":
        """Build from user-facing atoms given as ``(location, mass)`` pairs."""
        atoms = sorted((float(a), float(w)) for a, w in atoms)
        for a, w in atoms:
            if not 0.0 < w <= 1.0:
                raise InvalidModelError(f"atom mass at {a} must lie in (0, 1], got {w}")
        return cls(
            tuple(terms),
            tuple(a for a, _ in atoms),
            tuple(_mass_to_weight(w) for _, w in atoms),
            float(delay_T),
        )

    @classmethod
    def zero(cls) -> "GeneralizedIntensity":
        return cls()

    @classmethod
    def constant(cls, c: float, atoms: Sequence = (), delay_T: float = 0.0):
        return cls.build([Constant(float(c))], atoms, delay_T)

    @classmethod
    def power(cls, c: float, p: float, atoms: Sequence = (), delay_T: float = 0.0):
        return cls.build([Power(float(c), float(p))], atoms, delay_T)

    @classmethod
    def piecewise(cls, knots, values, atoms: Sequence = (), delay_T: float = 0.0):
        return cls.build([Piecewise.from_arrays(knots, values)], atoms, delay_T)

    @classmethod
    def rational(cls, a0, a1, b0, b1, atoms: Sequence = (), delay_T: float = 0.0):
        return cls.build([Rational(a0, a1, b0, b1)], atoms, delay_T)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneralizedIntensity":
        if not isinstance(d, dict):
            raise InvalidModelError(f"intensity must be an object, got {type(d).__name__}")
        if d.get("shape") == "sum":
            terms = [term_from_dict(t) for t in d.get("params", [])]
        else:
            terms = [term_from_dict(d)]
        atoms = []
        for item in d.get("atoms", []):
            try:
                atoms.append((float(item["at"]), float(item["mass"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidModelError(f"bad atom entry {item!r}") from exc
        return cls.build(terms, atoms, float(d.get("delay_T", 0.0)))

    def to_dict(self) -> dict:
        if len(self.terms) == 0:
            d = Constant(0.0).to_dict()
        elif len(self.terms) == 1:
            d = self.terms[0].to_dict()
        else:
            d = {"shape": "sum", "params": [t.to_dict() for t in self.terms]}
        d["atoms"] = [{"at": a, "mass": m} for a, m in zip(self.atom_locs, self.atom_conditional_masses)]
        d["delay_T"] = self.delay_T
        return d

    # -- hazard evaluation --------------------------------------------------

    @property
    def atom_conditional_masses(self) -> tuple:
        return tuple(_weight_to_mass(w) for w in self.atom_weights)

    @property
    def support_end(self) -> float:
        return min((t.support_end for t in self.terms), default=math.inf)

    @property
    def limit(self) -> float:
        """Total continuous cumulative hazard ``int_0^inf lam``."""
        return float(sum(t.limit for t in self.terms))

    def hazard(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for t in self.terms:
            out = out + t.rate(s)
        return _out(out, s.ndim == 0)

    def cumulative_hazard(self, x):
        """Continuous part ``int_0^x lam(s) ds``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in self.terms:
            out = out + t.cumulative(x)
        return _out(out, x.ndim == 0)

    def atom_hazard(self, x, inclusive: bool = True):
        """Sum of atom weights at locations ``<= x`` (``< x`` if not inclusive)."""
        x = np.asarray(x, dtype=float)
        if not self.atom_locs:
            return _out(np.zeros_like(x), x.ndim == 0)
        idx = np.searchsorted(self._locs, x, side="right" if inclusive else "left")
        cw = np.concatenate([[0.0], self._cw])
        return _out(cw[idx], x.ndim == 0)

    def total_hazard(self, x):
        """Right-continuous generalized cumulative hazard."""
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.cumulative_hazard(x)) + np.asarray(self.atom_hazard(x))
        out = np.where(x < 0, 0.0, out)
        return _out(out, x.ndim == 0)

    # -- distribution -------------------------------------------------------

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.exp(-np.asarray(self.total_hazard(x))), x.ndim == 0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(-np.expm1(-np.asarray(self.total_hazard(x))), x.ndim == 0)

    def density(self, x):
        """Density of the absolutely continuous component."""
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            d = np.asarray(self.hazard(x)) * np.asarray(self.survival(x))
        d = np.where(np.isnan(d) | (x < 0), 0.0, d)
        return _out(d, x.ndim == 0)

    pdf = density

    @property
    def atom_masses(self) -> tuple:
        """Unconditional point masses ``P{xi = a_i}``."""
        out = []
        prev = 0.0
        for a, w in zip(self.atom_locs, self.atom_weights):
            before = float(self.cumulative_hazard(a)) + prev
            out.append(math.exp(-before) * _weight_to_mass(w))
            prev += w
        return tuple(out)

    def cont_cdf(self, x):
        """Mass of the absolutely continuous component on ``[0, x]``."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.cdf(x), dtype=float)
        if self.atom_locs:
            masses = np.concatenate([[0.0], np.cumsum(self.atom_masses)])
            c = c - masses[np.searchsorted(self._locs, x, side="right")]
        return _out(np.maximum(c, 0.0), x.ndim == 0)

    @property
    def defect(self) -> float:
        """``P{xi = inf}``."""
        if any(math.isinf(w) for w in self.atom_weights):
            return 0.0
        return math.exp(-(self.limit + float(sum(self.atom_weights))))

    # -- inversion ----------------------------------------------------------

    def _bisect(self, h: np.ndarray) -> np.ndarray:
        H = self.cumulative_hazard
        lo = np.zeros_like(h)
        end = self.support_end
        if math.isfinite(end):
            hi = np.full_like(h, end)
        else:
            hi = np.ones_like(h)
            for _ in range(64):
                need = np.asarray(H(hi)) < h
                if not need.any():
                    break
                hi = np.where(need & (hi < _MAX_BRACKET), hi * 2.0, hi)
            need = np.asarray(H(hi)) < h
            if need.any():
                limit = self.limit
                beyond = need & (h > limit)
                stuck = need & ~beyond
                if stuck.any():
                    raise NumericError(
                        f"quantile failed to bracket cumulative hazard {h[stuck][:3]} "
                        f"(reached {np.asarray(H(hi))[stuck][:3]} at t={hi[stuck][:3]})"
                    )
                hi = np.where(beyond, np.inf, hi)
        fin = np.isfinite(hi)
        for i in range(400):
            mid = 0.5 * (lo + hi)
            ok = np.asarray(H(mid)) >= h
            hi = np.where(fin & ok, mid, hi)
            lo = np.where(fin & ~ok, mid, lo)
            if i % 8 == 7 and np.all(~fin | (hi - lo <= 1e-12 * np.maximum(1.0, hi))):
                break
        return hi

    def _cont_inverse(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        if not self.terms:
            return np.where(h > 0, np.inf, 0.0)
        if len(self.terms) == 1:
            y = self.terms[0].inverse(h)
            if y is not None:
                return np.asarray(y, dtype=float)
        if self._head is not None:
            head, at = self._head
            split = float(head.cumulative(at))
            inside = h <= split
            out = np.empty_like(h)
            out[inside] = head.inverse(h[inside])
            if not inside.all():
                out[~inside] = self._bisect(h[~inside])
            return out
        return self._bisect(h)

    def inverse_total_hazard(self, target):
        """Smallest ``y`` with ``total_hazard(y) >= target`` (``inf`` if none)."""
        t = np.asarray(target, dtype=float)
        scalar = t.ndim == 0
        shape = t.shape
        t = np.atleast_1d(t).ravel()
        if not self.atom_locs:
            return _out(self._cont_inverse(t).reshape(shape), scalar)
        res = np.full_like(t, np.nan)
        pending = np.ones(t.shape, dtype=bool)
        acc = 0.0
        for b, w in zip(self.atom_locs, self.atom_weights):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            y = self._cont_inverse(t[idx] - acc)
            hit = y < b
            res[idx[hit]] = y[hit]
            pending[idx[hit]] = False
            idx = idx[~hit]
            acc += w
            at_atom = float(self.cumulative_hazard(b)) + acc >= t[idx]
            res[idx[at_atom]] = b
            pending[idx[at_atom]] = False
        idx = np.flatnonzero(pending)
        if idx.size:
            res[idx] = self._cont_inverse(t[idx] - acc)
        return _out(res.reshape(shape), scalar)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        with np.errstate(divide="ignore"):
            target = -np.log1p(-u)
        return self.inverse_total_hazard(target)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-transform draws; ``inf`` with the defective probability."""
        u = rng.random(size)
        return self.quantile(u)

    # -- derived laws -------------------------------------------------------

    def superpose(self, other: "GeneralizedIntensity") -> "GeneralizedIntensity":
        """Intensity of ``min(xi, eta)`` for independent ``xi``, ``eta``."""
        if not other.terms and not other.atom_locs:
            return self
        if not self.terms and not self.atom_locs:
            return other
        merged: list[list[float]] = []
        for a, w in sorted(zip(self.atom_locs + other.atom_locs, self.atom_weights + other.atom_weights)):
            if merged and abs(a - merged[-1][0]) <= ATOM_TOL:
                merged[-1][1] += w
            else:
                merged.append([a, w])
        return GeneralizedIntensity(
            self.terms + other.terms,
            tuple(a for a, _ in merged),
            tuple(w for _, w in merged),
            min(self.delay_T, other.delay_T),
        )

    def residual(self, a: float) -> "GeneralizedIntensity":
        """Law of ``xi - a`` given ``xi > a``."""
        a = float(a)
        if a < 0:
            raise ValueError("elapsed time must be >= 0")
        if a == 0.0:
            return self
        if not float(self.survival(a)) > 0:
            raise ConditioningError(f"survival at elapsed time {a} is zero")
        keep = [(b - a, w) for b, w in zip(self.atom_locs, self.atom_weights) if b > a + ATOM_TOL]
        return GeneralizedIntensity(
            tuple(_shift_term(t, a) for t in self.terms),
            tuple(b for b, _ in keep),
            tuple(w for _, w in keep),
            max(0.0, self.delay_T - a),
        )

    # -- moments ------------------------------------------------------------

    def tail_point(self, tol: float = TAIL_TOL) -> float:
        """First dyadic time where survival drops below ``tol`` (``inf`` if never)."""
        x = 1.0
        while float(self.survival(x)) >= tol:
            x *= 2.0
            if x > 2.0**50:
                return math.inf
        return x

    def moment(self, order: float, tail_tol: float = TAIL_TOL) -> float:
        """``E xi**order``; ``inf`` when the tail is not integrable."""
        if not order > 0:
            raise ValueError("moment order must be positive")
        x_end = self.tail_point(tail_tol)
        if not math.isfinite(x_end):
            return math.inf
        s1 = float(self.survival(x_end))
        s2 = float(self.survival(2.0 * x_end))
        remainder = 0.0
        if s1 > 0 and s2 > 0:
            alpha = math.log2(s1 / s2)
            if alpha <= order + 0.05:
                return math.inf
            remainder = order * x_end**order * s1 / (alpha - order)
        edges = {0.0, x_end}
        e = 1.0
        while e < x_end:
            edges.add(e)
            e *= 2.0
        edges.update(a for a in self.atom_locs if a < x_end)
        if math.isfinite(self.support_end) and self.support_end < x_end:
            edges.add(self.support_end)
        edges = sorted(edges)

        def integrand(x):
            return order * x ** (order - 1.0) * float(self.survival(x))

        total = 0.0
        with warnings.catch_warnings():
            # tabulated hazards have many kinks; the reached accuracy is still far below tolerance
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for lo, hi in zip(edges, edges[1:]):
                val, _ = integrate.quad(integrand, lo, hi, epsabs=QUAD_EPSABS * 1e-2, epsrel=QUAD_EPSREL * 1e-2, limit=200)
                total += val
        return total + remainder

    def hazard_diverges(self, level: float = DIVERGENCE_LEVEL) -> bool:
        """Numerical proxy for ``int_0^inf lam = inf``."""
        x = 1.0
        while x <= 2.0**50:
            if float(self.total_hazard(x)) > level:
                return True
            x *= 2.0
        return False

    def view(self) -> "DistributionView":
        return DistributionView(self)


@dataclass(frozen=True)
class DistributionView:
    """Distribution functions derived from one generalized intensity."""

    gi: GeneralizedIntensity

    def cdf(self, x):
        return self.gi.cdf(x)

    def survival(self, x):
        return self.gi.survival(x)

    def density(self, x):
        return self.gi.density(x)

    pdf = density

    def cont_cdf(self, x):
        return self.gi.cont_cdf(x)

    def quantile(self, u):
        return self.gi.quantile(u)

    @property
    def atoms(self) -> tuple:
        return tuple(zip(self.gi.atom_locs, self.gi.atom_masses))

    @property
    def support(self) -> tuple:
        return (0.0, self.gi.support_end)

    def upper(self, tol: float = TAIL_TOL) -> float:
        end = self.gi.support_end
        if math.isfinite(end):
            return end
        return self.gi.tail_point(tol)

    def moment(self, order: float) -> float:
        return self.gi.moment(order)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def cdf_from_intensity(gi: GeneralizedIntensity, x):
    """``1 - exp(-int_0^x lam) * prod_{a_i <= x} (1 - w_i)``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("cdf_from_intensity needs x >= 0")
    h = np.asarray(gi.cumulative_hazard(xa))
    if np.any(~np.isfinite(h) & (xa < gi.support_end)):
        warnings.warn("cumulative hazard overflowed at finite time; cdf saturated to 1", SaturationWarning, stacklevel=2)
    return gi.cdf(x)


def superpose_min(gi1: GeneralizedIntensity, gi2: GeneralizedIntensity) -> GeneralizedIntensity:
    return gi1.superpose(gi2)


def sample(gi: GeneralizedIntensity, rng: np.random.Generator, size=None):
    return gi.sample(rng, size)


def moment(gi: GeneralizedIntensity, order: float) -> float:
    return gi.moment(order)


def residual_intensity(gi: GeneralizedIntensity, elapsed: float) -> GeneralizedIntensity:
    return gi.residual(elapsed)
