"""Monte Carlo checks of the analytic bounds.

Each check compares an empirical estimate with a bound and a 3-sigma
half-width. An upper bound passes when ``estimate - half_width <= bound``,
a lower bound when ``estimate + half_width >= bound``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bounds as bd
from .errors import ConfigError
from .model import ProcessSpec
from .process import BatchResult, CoupledResult, simulate_batch, simulate_coupled

__all__ = [
    "ExperimentPlan",
    "CheckRecord",
    "TVPoint",
    "VerificationReport",
    "histogram_tv",
    "check_lorden",
    "check_coupling_epoch",
    "estimate_tv_decay",
    "check_stationary_tail",
    "run_verification",
    "REQUIRED_BOUNDS",
]

SIGMAS = 3.0
# absolute allowance for quadrature error in the bounds
COMPARE_TOL = 1e-9
CENSOR_LIMIT = 0.5
SPARSE_COUNT = 5
SPARSE_SHARE = 0.2
REQUIRED_BOUNDS = frozenset({"Xi", "p0", "pi", "T", "K", "stationary_tail"})

# stream offsets keep the simulations of one plan independent of each other
LORDEN_STREAMS = 0
TV_STREAMS_X = 1_000_000
TV_STREAMS_XHAT = 2_000_000
COUPLED_STREAMS = 3_000_000


@dataclass
class ExperimentPlan:
    """What to simulate and how to compare."""

    spec: ProcessSpec
    probes: Sequence[float]
    runs: int = 10_000
    seed: int = 0
    bins: int = 64
    N_orders: Sequence[float] = (1.0,)
    theta: float | str = "auto"
    horizon: float | None = None
    start: Sequence[float] | None = None

    def __post_init__(self):
        self.probes = tuple(float(p) for p in self.probes)
        self.N_orders = tuple(float(n) for n in self.N_orders)
        if self.runs < 100:
            raise ConfigError("runs must be at least 100")
        if not self.probes or any(p <= 0 for p in self.probes):
            raise ConfigError("probes must be positive")
        if any(b <= a for a, b in zip(self.probes, self.probes[1:])):
            raise ConfigError("probes must be strictly increasing")
        if self.bins < 16:
            raise ConfigError("bins must be at least 16")
        if self.start is None:
            self.start = (0.0,) * self.spec.m
        self._bounds = None

    def bounds(self) -> bd.LordenBounds:
        if self._bounds is None:
            N = min(self.N_orders)
            self._bounds = bd.compute_bounds(self.spec, self.theta, N)
        return self._bounds

    def valid_orders(self):
        return [N for N in self.N_orders if N <= self.spec.k - 1 + 1e-12]


@dataclass
class CheckRecord:
    name: str
    bound: float
    estimate: float
    half_width: float
    verdict: str
    kind: str = "upper"
    note: str = ""

    @classmethod
    def judge(cls, name, bound, estimate, half_width, kind="upper", note="") -> "CheckRecord":
        if kind == "upper":
            ok = estimate - half_width <= bound + COMPARE_TOL
        else:
            ok = estimate + half_width >= bound - COMPARE_TOL
        return cls(name, float(bound), float(estimate), float(half_width), "pass" if ok else "fail", kind, note)

    @property
    def slack(self) -> float:
        """Bound divided by estimate for upper bounds (``inf`` if the estimate is 0)."""
        if self.kind != "upper" or self.estimate <= 0:
            return math.inf
        return self.bound / self.estimate


@dataclass
class TVPoint:
    t: float
    tv: float
    tv_half: float
    p_tau: float
    p_half: float
    K_bound: float
    cells: int
    warning: str = ""


@dataclass
class VerificationReport:
    records: list = field(default_factory=list)
    tv_curve: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    covered: set = field(default_factory=set)
    quantities: dict = field(default_factory=dict)

    def add(self, records, covers: Sequence[str] = ()):
        self.records.extend(records)
        self.covered.update(covers)

    def assert_coverage(self, required=REQUIRED_BOUNDS):
        missing = set(required) - self.covered
        if missing:
            raise AssertionError(f"bounds without a check: {sorted(missing)}")

    @property
    def status(self) -> str:
        verdicts = {r.verdict for r in self.records}
        if "fail" in verdicts:
            return "fail"
        if "inconclusive" in verdicts:
            return "inconclusive"
        return "pass"

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "kind", "bound", "estimate", "half_width", "verdict", "note"])
            for r in self.records:
                w.writerow([r.name, r.kind, _fmt(r.bound), _fmt(r.estimate), _fmt(r.half_width), r.verdict, r.note])

    def tv_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "tv", "tv_half_width", "p_tau_gt_t", "p_half_width", "K_over_tN", "cells", "warning"])
            for p in self.tv_curve:
                w.writerow([_fmt(p.t), _fmt(p.tv), _fmt(p.tv_half), _fmt(p.p_tau), _fmt(p.p_half), _fmt(p.K_bound), p.cells, p.warning])

    def summary(self) -> str:
        lines = [f"status: {self.status}"]
        for k, v in self.quantities.items():
            lines.append(f"{k} = {_fmt(v)}")
        width = max((len(r.name) for r in self.records), default=10)
        for r in self.records:
            rel = "<=" if r.kind == "upper" else ">="
            lines.append(
                f"[{r.verdict:>12}] {r.name:<{width}}  {_fmt(r.estimate)} +- {_fmt(r.half_width)} {rel} {_fmt(r.bound)}"
                + (f"  ({r.note})" if r.note else "")
            )
        for f in self.findings:
            lines.append(f"finding: {f}")
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def _mean_hw(v: np.ndarray):
    v = np.asarray(v, dtype=float)
    n = v.size
    sd = float(v.std(ddof=1)) if n > 1 else 0.0
    return float(v.mean()), SIGMAS * sd / math.sqrt(n)


def _prop_hw(p: float, n: int) -> float:
    """Agresti-Coull half-width; stays positive when ``p`` is 0 or 1."""
    z2 = SIGMAS**2
    pt = (p * n + z2 / 2) / (n + z2)
    return SIGMAS * math.sqrt(pt * (1 - pt) / (n + z2)) + abs(pt - p)


# ---------------------------------------------------------------------------


def check_lorden(plan: ExperimentPlan, batch: BatchResult | None = None) -> list[CheckRecord]:
    """Empirical ``E B_t^N`` per probe and component against ``Xi(N)``."""
    spec = plan.spec
    if batch is None:
        batch = simulate_batch(spec, plan.start, plan.probes, plan.runs, plan.seed, LORDEN_STREAMS)
    out = []
    for N in plan.N_orders:
        if N > spec.k - 1 + 1e-12:
            out.append(CheckRecord(f"E B^{N:g}", math.nan, math.nan, math.nan, "skipped", note=f"order above k-1 = {spec.k - 1:g}"))
            continue
        bound = bd.xi_bound(spec, N)
        for k, t in enumerate(batch.probes):
            for i in range(spec.m):
                est, hw = _mean_hw(batch.B[:, k, i] ** N)
                out.append(CheckRecord.judge(f"E B^{N:g} t={t:g} i={i}", bound, est, hw))
    return out


def check_coupling_epoch(plan: ExperimentPlan, a, ahat, coupled: CoupledResult | None = None) -> list[CheckRecord]:
    """Empirical moments of the coupling time against the epoch bound.

    Censored pairs enter at the horizon, which can only lower the estimate.
    """
    spec = plan.spec
    lb = plan.bounds()
    if coupled is None:
        coupled = simulate_coupled(spec, a, ahat, lb.theta, plan.runs, plan.seed, plan.horizon, (), COUPLED_STREAMS)
    cens = float(coupled.censored.mean())
    tau = coupled.tau_censored_at_horizon()
    out = []
    note = f"censored {cens:.4g}"
    for N in plan.valid_orders():
        bound = lb.T_of_a(a, N, a_hat=ahat)
        est, hw = _mean_hw(tau**N)
        rec = CheckRecord.judge(f"E tau^{N:g}", bound, est, hw, note=note)
        if cens > CENSOR_LIMIT:
            rec.verdict = "inconclusive"
        out.append(rec)
    n = tau.size
    first = float((coupled.first_condition == 1).mean())
    out.append(CheckRecord.judge("P threshold at first epoch", lb.p0**2, first, _prop_hw(first, n), "lower"))
    succ = float(coupled.first_attempt_success().mean())
    low = lb.p0**2 * lb.pi1**spec.m
    out.append(
        CheckRecord.judge("P coupled at first attempt", low, succ, _prop_hw(succ, n), "lower", note=f"pi={lb.pi:.4g}")
    )
    return out


def histogram_tv(x: np.ndarray, y: np.ndarray, bins: int):
    """Total variation between two samples on an equal-mass product grid.

    Returns ``(tv, half_width, cells, sparse)`` where ``sparse`` flags that
    more than a fifth of occupied cells expect fewer than five points.
    """
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    m = x.shape[1]
    per = max(2, int(round(bins ** (1.0 / m))))
    pooled = np.vstack([x, y])
    cx = np.zeros(x.shape[0], dtype=np.int64)
    cy = np.zeros(y.shape[0], dtype=np.int64)
    cells = 1
    for d in range(m):
        edges = np.unique(np.quantile(pooled[:, d], np.linspace(0, 1, per + 1)[1:-1]))
        k = edges.size + 1
        cx = cx * k + np.searchsorted(edges, x[:, d], side="right")
        cy = cy * k + np.searchsorted(edges, y[:, d], side="right")
        cells *= k
    nx, ny = x.shape[0], y.shape[0]
    hx = np.bincount(cx, minlength=cells) / nx
    hy = np.bincount(cy, minlength=cells) / ny
    tv = 0.5 * float(np.abs(hx - hy).sum())
    se = np.sqrt(hx * (1 - hx) / nx + hy * (1 - hy) / ny)
    half = SIGMAS * 0.5 * float(se.sum())
    occupied = (hx + hy) > 0
    expected = 0.5 * (hx * nx + hy * ny)
    sparse = bool(occupied.any() and np.mean(expected[occupied] < SPARSE_COUNT) > SPARSE_SHARE)
    return tv, half, int(occupied.sum()), sparse


def estimate_tv_decay(
    plan: ExperimentPlan,
    a,
    ahat,
    coupled: CoupledResult | None = None,
    N: float | None = None,
):
    """TV curve between the laws started at ``a`` and ``ahat`` and its checks."""
    spec = plan.spec
    lb = plan.bounds()
    N = min(plan.valid_orders(), default=1.0) if N is None else N
    bx = simulate_batch(spec, a, plan.probes, plan.runs, plan.seed, TV_STREAMS_X)
    by = simulate_batch(spec, ahat, plan.probes, plan.runs, plan.seed, TV_STREAMS_XHAT)
    if coupled is None:
        coupled = simulate_coupled(spec, a, ahat, lb.theta, plan.runs, plan.seed, plan.horizon, (), COUPLED_STREAMS)
    K = lb.K(N)
    tau = np.where(coupled.censored, math.inf, coupled.tau)
    curve, records, findings = [], [], []
    for k, t in enumerate(plan.probes):
        bins = plan.bins
        tv, half, cells, sparse = histogram_tv(bx.B[:, k], by.B[:, k], bins)
        warning = ""
        if sparse:
            warning = "sparse cells; grid coarsened"
            bins = max(2**spec.m, bins // 4)
            tv, half, cells, sparse = histogram_tv(bx.B[:, k], by.B[:, k], bins)
            if sparse:
                warning = "sparse cells after coarsening"
        p = float((tau > t).mean())
        ph = _prop_hw(p, tau.size)
        kb = K / t**N if math.isfinite(K) else math.inf
        curve.append(TVPoint(float(t), tv, half, p, ph, kb, cells, warning))
        records.append(CheckRecord.judge(f"TV t={t:g} vs P(tau>t)", p + ph, tv, half, note=warning))
        records.append(CheckRecord.judge(f"TV t={t:g} vs K/t^{N:g}", kb, tv, half))
    tvs = [c.tv for c in curve]
    if any(b > a_ + 1e-12 for a_, b in zip(tvs, tvs[1:])):
        findings.append("TV estimate is not monotone across probes")
    return curve, records, findings


def check_stationary_tail(plan: ExperimentPlan, batch: BatchResult | None = None, grid: int = 8) -> tuple[list, list]:
    """Elapsed-time law at the largest probe against ``Psi``.

    ``Psi(s)`` bounds the stationary probability ``P{B <= s}``; that is the
    comparison carrying a verdict. The tail ``P{B > s}`` is compared as well
    and reported as findings.
    """
    spec = plan.spec
    if batch is None:
        batch = simulate_batch(spec, plan.start, plan.probes, plan.runs, plan.seed, LORDEN_STREAMS)
    Bt = batch.B[:, -1, :]
    top = float(np.quantile(Bt, 0.999))
    ss = np.concatenate([[0.0], np.geomspace(max(top, 1e-6) / 64, top, grid - 2), [2.0 * top + 1.0]])
    records, findings = [], []
    n = Bt.shape[0]
    for s in ss:
        psi = bd.stationary_tail(spec, float(s))
        for i in range(spec.m):
            below = float((Bt[:, i] <= s).mean())
            records.append(CheckRecord.judge(f"P(B<=s) s={s:.4g} i={i}", psi, below, _prop_hw(below, n)))
            tail = 1.0 - below
            if tail - _prop_hw(tail, n) > psi:
                findings.append(f"P(B>{s:.4g}) = {tail:.4g} exceeds Psi = {psi:.4g} for component {i}")
    return records, findings


def run_verification(plan: ExperimentPlan, a=None, ahat=None) -> VerificationReport:
    """Run every check of the plan and assemble the report."""
    spec = plan.spec
    a = plan.start if a is None else a
    if ahat is None:
        xi = bd.xi_bound(spec, 1.0)
        ahat = tuple(min(xi, 10.0) * (i + 1) / spec.m for i in range(spec.m))
    rep = VerificationReport()
    lb = plan.bounds()
    rep.quantities.update({"Theta": lb.theta, "p0": lb.p0, "pi1": lb.pi1, "pi": lb.pi})
    for N in plan.valid_orders():
        rep.quantities[f"Xi({N:g})"] = bd.xi_bound(spec, N)
        rep.quantities[f"K({N:g})"] = lb.K(N)
    batch = simulate_batch(spec, plan.start, plan.probes, plan.runs, plan.seed, LORDEN_STREAMS)
    rep.add(check_lorden(plan, batch), ["Xi"])
    coupled = simulate_coupled(spec, a, ahat, lb.theta, plan.runs, plan.seed, plan.horizon, (), COUPLED_STREAMS)
    rep.add(check_coupling_epoch(plan, a, ahat, coupled), ["T", "p0", "pi"])
    curve, recs, finds = estimate_tv_decay(plan, a, ahat, coupled)
    rep.tv_curve = curve
    rep.add(recs, ["K"])
    rep.findings.extend(finds)
    recs, finds = check_stationary_tail(plan, batch)
    rep.add(recs, ["stationary_tail"])
    rep.findings.extend(finds)
    for r in rep.records:
        if r.verdict == "pass" and r.kind == "upper" and math.isfinite(r.slack) and r.name.startswith(("E tau", "E B")):
            rep.findings.append(f"{r.name}: bound/estimate = {r.slack:.3g}")
    rep.assert_coverage()
    return rep
