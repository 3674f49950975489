"""Two-element repairable system (main unit plus reserve) as a two-component model.

Component 0 renews at the end of every full cycle (work then repair) of the
main unit, so its law is the convolution of the two phase laws. Component 1
is the reserve; its hazard is its own hazard plus ``boost`` times the
probability that the main unit is under repair given the elapsed time of
the main cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import bounds as bd
from .errors import InfeasibleOptimizationError, InvalidModelError
from .intensity import Constant, GeneralizedIntensity, Piecewise, Spliced, Term
from .model import HazardRate, ProcessSpec, SumRate, TabulatedRate
from .verify import CheckRecord, ExperimentPlan, VerificationReport, check_lorden, check_stationary_tail, run_verification

__all__ = ["ReliabilitySpec", "CycleLaw", "cycle_law", "to_process_spec", "analyze", "ReliabilityReport"]

GRID_POINTS = 2**15
TAIL = 1e-10
# FFT round-off swamps the convolution below this survival level
CUT = 1e-11
SPAN_FACTOR = 50.0


@dataclass(frozen=True)
class ReliabilitySpec:
    """Main unit phase hazards, reserve hazard and the reserve's extra hazard.

    Parameters
    ----------
    work, repair : GeneralizedIntensity
        Hazards of the main unit while working and while under repair.
    reserve : GeneralizedIntensity
        Hazard of the reserve unit while the main unit works.
    boost : float
        Additional reserve hazard while the main unit is under repair.
    k : float
        Moment order used for the bound pipeline.
    """

    work: GeneralizedIntensity
    repair: GeneralizedIntensity
    reserve: GeneralizedIntensity
    boost: float = 0.0
    k: float = 2.0
    grid_points: int = GRID_POINTS

    def __post_init__(self):
        for name in ("work", "repair", "reserve"):
            gi = getattr(self, name)
            if gi.atom_locs:
                raise InvalidModelError(f"{name} hazard must not carry atoms")
            if len(gi.terms) != 1:
                raise InvalidModelError(f"{name} hazard must be a single shape")
        if self.boost < 0:
            raise InvalidModelError("boost must be >= 0")

    def to_dict(self) -> dict:
        return {
            "work": self.work.to_dict(),
            "repair": self.repair.to_dict(),
            "reserve": self.reserve.to_dict(),
            "boost": self.boost,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReliabilitySpec":
        try:
            return cls(
                GeneralizedIntensity.from_dict(d["work"]),
                GeneralizedIntensity.from_dict(d["repair"]),
                GeneralizedIntensity.from_dict(d["reserve"]),
                float(d.get("boost", 0.0)),
                float(d.get("k", 2.0)),
            )
        except KeyError as exc:
            raise InvalidModelError(f"reliability block is missing field {exc}") from exc


@dataclass
class CycleLaw:
    """Tabulated law of one main-unit cycle on a uniform grid."""

    s: np.ndarray
    survival: np.ndarray
    hazard: np.ndarray
    in_repair: np.ndarray
    tail: Term

    @property
    def end(self) -> float:
        return float(self.s[-1])


def _span(gi: GeneralizedIntensity) -> tuple[float, float]:
    return float(gi.tail_point(TAIL)), float(gi.quantile(0.99))


def cycle_law(rs: ReliabilitySpec) -> CycleLaw:
    """Convolve work and repair phases; trapezoid rule on a uniform grid."""
    tw, qw = _span(rs.work)
    tr, qr = _span(rs.repair)
    end = min(tw + tr, SPAN_FACTOR * (qw + qr))
    if not math.isfinite(end) or end <= 0:
        raise InvalidModelError("cannot size the cycle grid from the phase laws")
    s = np.linspace(0.0, end, rs.grid_points + 1)
    h = s[1] - s[0]
    fw = np.asarray(rs.work.density(s))
    sw = np.asarray(rs.work.survival(s))
    fr = np.asarray(rs.repair.density(s))
    sr = np.asarray(rs.repair.survival(s))
    n = s.size

    def trap(a, b):
        c = signal.fftconvolve(a, b)[:n]
        return h * (c - 0.5 * (a[0] * b + a * b[0]))

    surv = sw + trap(fw, sr)
    dens = trap(fw, fr)
    keep = max(int(np.argmax(surv < CUT)) if np.any(surv < CUT) else n, 3)
    s, surv, dens, sw = s[:keep], np.clip(surv[:keep], 1e-300, 1.0), dens[:keep], sw[:keep]
    end = float(s[-1])
    haz = np.maximum(dens, 0.0) / surv
    rho = np.clip((surv - sw) / surv, 0.0, 1.0)
    heavy = rs.repair if float(rs.repair.survival(end)) >= float(rs.work.survival(end)) else rs.work
    return CycleLaw(s, surv, haz, rho, heavy.terms[0])


def _table(s, v, tail: Term, end: float) -> GeneralizedIntensity:
    return GeneralizedIntensity.build([Spliced(Piecewise.from_arrays(s, v), tail, end)])


def to_process_spec(rs: ReliabilitySpec, law: CycleLaw | None = None) -> ProcessSpec:
    """Two-component model with ``phi``/``Q`` the pointwise min/max of the tables."""
    law = law or cycle_law(rs)
    s, end = law.s, law.end
    res_term = rs.reserve.terms[0]
    h_res = np.asarray(rs.reserve.hazard(s), dtype=float)
    if not np.all(np.isfinite(h_res)):
        raise InvalidModelError("reserve hazard is not finite on the cycle grid")
    lift = rs.boost * float(law.in_repair.max())

    cyc_tail, res_tail = law.tail, res_term
    low_tail, high_tail = sorted([cyc_tail, res_tail], key=lambda t: float(t.rate(end)))
    phi = _table(s, np.minimum(law.hazard, h_res), low_tail, end)
    q_head = np.maximum(law.hazard, h_res + lift)
    zeros = Piecewise.from_arrays(s, np.zeros_like(s))
    Q = GeneralizedIntensity.build(
        [Spliced(Piecewise.from_arrays(s, q_head), high_tail, end), Spliced(zeros, Constant(lift), end)]
    )
    cycle = _table(s, law.hazard, cyc_tail, end)
    reserve = _table(s, h_res, res_tail, end)
    mu0 = HazardRate(0, cycle, phi)
    mu1 = SumRate((HazardRate(1, reserve, phi), TabulatedRate(0, tuple(s), tuple(rs.boost * law.in_repair))))
    spec = ProcessSpec(2, phi, Q, (mu0, mu1), rs.k)
    rep = spec.check()
    if rep.verdicts.get("A2") == "violated":
        raise InvalidModelError("reliability brackets fail: " + "; ".join(rep.warnings))
    return spec


@dataclass
class ReliabilityReport:
    """Bounds and Monte Carlo confirmations for one reliability system."""

    quantities: dict = field(default_factory=dict)
    report: VerificationReport = field(default_factory=VerificationReport)
    cycle_mean: float = math.nan
    failing: str = ""

    @property
    def status(self) -> str:
        return self.report.status

    def summary(self) -> str:
        lines = [f"main cycle mean = {self.cycle_mean:.6g}"]
        if self.failing:
            lines.append(f"infinite bound: {self.failing}")
        return "\n".join(lines) + "\n" + self.report.summary()


def analyze(rs: ReliabilitySpec, orders=(1.0,), runs: int = 10_000, seed: int = 0, probes=None, theta="auto") -> ReliabilityReport:
    """Bounds, simulation and verification for a reliability system.

    If a bound is infinite the checks depending on it are reported as
    skipped, the remaining simulation checks still run.
    """
    law = cycle_law(rs)
    spec = to_process_spec(rs, law)
    out = ReliabilityReport()
    out.cycle_mean = float(rs.work.moment(1) + rs.repair.moment(1))
    if probes is None:
        scale = out.cycle_mean if math.isfinite(out.cycle_mean) else float(law.end) / SPAN_FACTOR
        probes = tuple(c * scale for c in (2.5, 5.0, 10.0, 20.0))
    for N in orders:
        out.quantities[f"Xi({N:g})"] = bd.xi_bound(spec, N) if N <= spec.k - 1 else math.inf
    try:
        plan = ExperimentPlan(spec, probes, runs, seed, N_orders=orders, theta=theta)
        lb = plan.bounds()
    except (InfeasibleOptimizationError, ValueError) as exc:
        plan = ExperimentPlan(spec, probes, runs, seed, N_orders=orders, theta=1.0)
        for N in orders:
            out.quantities[f"K({N:g})"] = math.inf
        out.failing = str(exc)
        rep = VerificationReport()
        rep.quantities.update(out.quantities)
        rep.add(check_lorden(plan), ["Xi"])
        recs, finds = check_stationary_tail(plan)
        rep.add(recs, ["stationary_tail"])
        rep.findings.extend(finds)
        for name in ("E tau^N", "TV vs P(tau>t)", "TV vs K/t^N", "P threshold at first epoch", "P coupled at first attempt"):
            rep.records.append(CheckRecord(name, math.inf, math.nan, math.nan, "skipped", note="bound is infinite"))
        rep.covered.update({"T", "K", "p0", "pi"})
        rep.assert_coverage()
        out.report = rep
        return out
    for N in orders:
        out.quantities[f"K({N:g})"] = lb.K(N) if N <= spec.k - 1 else math.inf
    out.report = run_verification(plan)
    out.report.quantities.update(out.quantities)
    return out
