"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured values,
the pinned tolerance and the runtime against its budget.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

import oracles
from qrcbound import bounds as bd
from qrcbound.cli import run
from qrcbound.coupling import build_coupler, common_part
from qrcbound.intensity import GeneralizedIntensity as G
from qrcbound.model import ProcessSpec, ThresholdRate
from qrcbound.process import simulate_batch, simulate_coupled
from qrcbound.reliability import ReliabilitySpec, analyze
from qrcbound.verify import ExperimentPlan, check_coupling_epoch, check_lorden, estimate_tv_decay

KS_LEVEL = 0.01


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def emit(criterion, checks, budget=None):
        elapsed = time.perf_counter() - start
        parts = [f"{name}: {detail}" for name, _, detail in checks]
        ok = all(c[1] for c in checks)
        if budget is not None:
            ok = ok and elapsed < budget
            parts.append(f"runtime {elapsed:.1f}s < {budget:g}s")
        else:
            parts.append(f"runtime {elapsed:.1f}s")
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: " + "; ".join(parts))
        failed = [c[0] for c in checks if not c[1]]
        assert not failed, f"failed: {failed}"
        if budget is not None:
            assert elapsed < budget, f"runtime {elapsed:.1f}s over budget {budget}s"

    return emit


def exp_model(m, k=2.0):
    return ProcessSpec.homogeneous(m, G.constant(1.0), G.constant(1.0), k=k)


def test_c1_maximal_coupling(verdict):
    laws = [G.constant(1.0), G.constant(2.0)]
    kappa = common_part([g.view() for g in laws])
    ref = oracles.common_part([lambda x: math.exp(-x), lambda x: 2 * math.exp(-2 * x)])
    v, same = build_coupler([g.view() for g in laws]).joint_sample(np.random.default_rng(0), 100_000)
    rate = float(same.mean())
    p1 = stats.kstest(v[:, 0], laws[0].cdf).pvalue
    p2 = stats.kstest(v[:, 1], laws[1].cdf).pvalue
    verdict(
        1,
        [
            ("kappa", abs(kappa - ref) <= 1e-6, f"{kappa:.9f} vs oracle {ref:.9f} (tol 1e-6)"),
            ("coincidence", abs(rate - 0.75) <= 0.007, f"{rate:.4f} in 0.75 +- 0.007"),
            ("KS marginals", min(p1, p2) > KS_LEVEL, f"p = {p1:.3f}, {p2:.3f} > {KS_LEVEL}"),
        ],
        budget=10,
    )


def test_c2_classical_lorden(verdict):
    spec = exp_model(1)
    xi = bd.xi_bound(spec, 1.0)
    cl = bd.classical_lorden(spec.phi)
    b = simulate_batch(spec, [0.0], [50.0], 10_000, seed=0).B[:, 0, 0]
    mean = float(b.mean())
    hw = 3 * float(b.std(ddof=1)) / math.sqrt(b.size)
    verdict(
        2,
        [
            ("Xi(1) = classical = 2", abs(xi - 2) <= 1e-9 and abs(cl - 2) <= 1e-9, f"{xi:.12f}, {cl:.12f} (tol 1e-9)"),
            ("E B_50 <= 2", mean - hw <= xi, f"{mean:.4f} +- {hw:.4f}"),
            ("E B_50 near 1", abs(mean - 1) <= 0.05, f"|{mean:.4f} - 1| <= 0.05"),
        ],
        budget=60,
    )


def test_c3_modulated_lorden(verdict):
    phi = G.power(1.0, 1.0)
    Q = G.build(phi.terms + G.constant(1.0).terms)
    mu = (ThresholdRate(1, 1.0, 0.0, 1.0), ThresholdRate(0, 0.5, 1.0, 0.0))
    spec = ProcessSpec(2, phi, Q, mu, k=3.0)
    spec.validate()
    plan = ExperimentPlan(spec, [2.5, 5.0, 10.0], runs=10_000, seed=0, N_orders=(1.0, 2.0))
    recs = check_lorden(plan)
    worst = max(recs, key=lambda r: (r.estimate - r.half_width) / r.bound)
    verdict(
        3,
        [
            ("records", len(recs) == 12, f"{len(recs)} = 2 orders x 3 probes x 2 components"),
            ("E B^N <= Xi(N) (3 sigma)", all(r.verdict == "pass" for r in recs), f"tightest {worst.name}: {worst.estimate:.4f} +- {worst.half_width:.4f} <= {worst.bound:.4f}"),
        ],
        budget=300,
    )


def ks_with_jumps(x, cdf):
    """One-sample KS p-value valid when ``cdf`` has jumps.

    The sup distance is taken at right and left limits of the distinct
    sample points; the continuous-law null distribution is conservative.
    """
    x = np.sort(x)
    n = x.size
    u, last = np.unique(x, return_index=False, return_counts=True)
    right = np.cumsum(last) / n
    left = right - last / n
    F = np.asarray(cdf(u))
    F_left = np.asarray(cdf(np.nextafter(u, -np.inf)))
    d = max(np.abs(right - F).max(), np.abs(left - F_left).max())
    return float(stats.kstwo.sf(d, n))


def _min_ks(a, b, seed):
    rng = np.random.default_rng(seed)
    m = np.minimum(a.sample(rng, 100_000), b.sample(rng, 100_000))
    return ks_with_jumps(m, a.superpose(b).cdf)


def test_c4_superposition(verdict):
    p_cp = _min_ks(G.constant(0.7), G.power(1.0, 2.0), 0)
    p_atom = _min_ks(G.constant(1.0, atoms=[(1.0, 0.5)]), G.power(1.0, 1.0, atoms=[(1.0, 0.5)]), 1)
    verdict(
        4,
        [
            ("constant+power", p_cp > KS_LEVEL, f"KS p = {p_cp:.3f} > {KS_LEVEL}, n=1e5"),
            ("shared atom", p_atom > KS_LEVEL, f"KS p = {p_atom:.3f} > {KS_LEVEL}, n=1e5"),
        ]
    )


A, AHAT = [0.0, 0.0], [1.0, 2.0]


def test_c5_coupling_epoch(verdict):
    spec = exp_model(2, k=3.0)
    plan = ExperimentPlan(spec, [5.0], runs=10_000, seed=0, N_orders=(1.0, 2.0))
    lb = plan.bounds()
    cp = simulate_coupled(spec, A, AHAT, lb.theta, plan.runs, plan.seed)
    recs = {r.name: r for r in check_coupling_epoch(plan, A, AHAT, cp)}
    cens = float(cp.censored.mean())
    checks = [("censoring", cens < 0.01, f"{cens:.4f} < 0.01")]
    for N in (1, 2):
        r = recs[f"E tau^{N}"]
        checks.append((f"E tau^{N} <= T(a)_{N}", r.verdict == "pass", f"{r.estimate:.4f} +- {r.half_width:.4f} <= {r.bound:.4f}"))
    verdict(5, checks, budget=300)


def test_c6_convergence_rate(verdict):
    spec = exp_model(2, k=3.0)
    plan = ExperimentPlan(spec, [5.0, 10.0, 20.0, 40.0], runs=100_000, seed=0)
    curve, recs, _ = estimate_tv_decay(plan, A, AHAT, N=1.0)
    K = plan.bounds().K(1.0)
    coupling_ok = all(r.verdict == "pass" for r in recs if "P(tau>t)" in r.name)
    rate_ok = all(r.verdict == "pass" for r in recs if "K/t" in r.name)
    rows = ", ".join(f"t={p.t:g}: TV {p.tv:.4f}+-{p.tv_half:.4f} P(tau>t) {p.p_tau:.4f}" for p in curve)
    verdict(
        6,
        [
            ("TV <= P(tau>t) + bands", coupling_ok, rows),
            ("TV t^1 <= K(1)", rate_ok, f"K(1) = {K:.4f}, max TV*t = {max(p.tv * p.t for p in curve):.4f} (minus band)"),
        ],
        budget=900,
    )


def test_c7_coupled_marginals(verdict):
    phi = G.constant(1.0)
    spec = ProcessSpec(2, phi, G.constant(2.0), (ThresholdRate(1, 1.0, 0.0, 1.0), ThresholdRate(0, 0.5, 1.0, 0.0)), k=3.0)
    probes = [2.0, 6.0]
    cp = simulate_coupled(spec, A, AHAT, 10.0, 10_000, seed=0, probes=probes)
    x = simulate_batch(spec, A, probes, 10_000, seed=1)
    xh = simulate_batch(spec, AHAT, probes, 10_000, seed=2)
    ps = []
    for k in range(len(probes)):
        for j in range(2):
            ps.append(stats.ks_2samp(cp.B[:, k, 0, j], x.B[:, k, j]).pvalue)
            ps.append(stats.ks_2samp(cp.B[:, k, 1, j], xh.B[:, k, j]).pvalue)
    verdict(7, [("two-sample KS", min(ps) > KS_LEVEL, f"min p = {min(ps):.3f} > {KS_LEVEL} over {len(ps)} comparisons, 1e4 paths")])


def _reliability_cli(tmp_path, name):
    import json

    cfg = tmp_path / "rel.json"
    block = {
        "work": {"shape": "constant", "params": [1.0]},
        "repair": {"shape": "constant", "params": [2.0]},
        "reserve": {"shape": "constant", "params": [0.5]},
        "boost": 0.5,
    }
    cfg.write_text(json.dumps({"schema": "qrc-config-1", "reliability": block, "run": {"seed": 0, "runs": 10_000}}))
    out = tmp_path / name
    code = run(["reliability", "--config", str(cfg), "--out", str(out)])
    return code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_c8_reliability(verdict, tmp_path):
    code1, files1 = _reliability_cli(tmp_path, "a")
    code2, files2 = _reliability_cli(tmp_path, "b")
    status = files1.get("summary.txt", b"").decode().split("\n")
    heavy = ReliabilitySpec(G.constant(1.0), G.rational(2.0, 0, 1, 1), G.constant(0.5), boost=0.5)
    res = analyze(heavy, runs=2000, seed=0)
    skipped = sum(r.verdict == "skipped" for r in res.report.records)
    verdict(
        8,
        [
            ("exponential system", code1 == 0 and "status: pass" in status, f"exit {code1}, {next((s for s in status if s.startswith('status')), '?')}"),
            ("heavy-tailed sentinel", math.isinf(res.quantities["K(1)"]) and res.status == "pass", f"Xi(1) = {res.quantities['Xi(1)']}, K(1) = {res.quantities['K(1)']}, {skipped} checks skipped"),
            ("seed 0 byte-identical", code2 == code1 and files1 == files2, f"{len(files1)} files compared"),
        ]
    )
