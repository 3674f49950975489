import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qrcbound import bounds as bd
from qrcbound.errors import InvalidModelError
from qrcbound.intensity import GeneralizedIntensity as G
from qrcbound.reliability import ReliabilitySpec, analyze, cycle_law, to_process_spec


def exp_system(work=1.0, repair=2.0, reserve=0.5, boost=0.5):
    return ReliabilitySpec(G.constant(work), G.constant(repair), G.constant(reserve), boost=boost)


def hypo_survival(a, b, s):
    # sum of Exp(a) and Exp(b), a != b
    return (b * np.exp(-a * s) - a * np.exp(-b * s)) / (b - a)


def test_cycle_survival_matches_closed_form():
    law = cycle_law(exp_system())
    ref = hypo_survival(1.0, 2.0, law.s)
    np.testing.assert_allclose(law.survival, ref, rtol=1e-5)


def test_repair_probability_matches_closed_form():
    law = cycle_law(exp_system())
    ref = hypo_survival(1.0, 2.0, law.s)
    rho = (ref - np.exp(-law.s)) / ref
    np.testing.assert_allclose(law.in_repair, rho, atol=1e-4)


def test_cycle_mean_against_phase_sum():
    rs = ReliabilitySpec(G.power(1.0, 1.0), G.constant(3.0), G.constant(0.5))
    law = cycle_law(rs)
    table = integrate.trapezoid(law.survival, law.s)
    phases = integrate.quad(lambda x: math.exp(-x * x / 2), 0, np.inf)[0] + 1 / 3
    assert table == pytest.approx(phases, abs=1e-6)


@settings(max_examples=8)
@given(st.floats(0.5, 2.0), st.floats(1.0, 4.0), st.floats(0.1, 1.0), st.floats(0.0, 2.0))
def test_brackets_hold(work, repair, reserve, boost):
    if abs(work - repair) < 1e-3:
        repair += 0.5
    spec = to_process_spec(exp_system(work, repair, reserve, boost))
    assert spec.check().verdicts["A2"] == "ok"


def test_atoms_and_negative_boost_rejected():
    with pytest.raises(InvalidModelError):
        ReliabilitySpec(G.constant(1.0, atoms=[(1.0, 0.5)]), G.constant(1.0), G.constant(1.0))
    with pytest.raises(InvalidModelError):
        exp_system(boost=-1.0)


def test_dict_round_trip():
    rs = ReliabilitySpec(G.power(1.0, 1.0), G.rational(3.0, 0, 1, 1), G.constant(0.5), boost=0.3, k=3.0)
    back = ReliabilitySpec.from_dict(json.loads(json.dumps(rs.to_dict())))
    assert back.to_dict() == rs.to_dict()


def test_missing_block_rejected():
    with pytest.raises(InvalidModelError):
        ReliabilitySpec.from_dict({"work": {"shape": "constant", "params": [1.0]}})


def test_exponential_system_passes():
    rs = exp_system()
    spec = to_process_spec(rs)
    xi = bd.xi_bound(spec, 1.0)
    out = analyze(rs, runs=1000, seed=0, theta=4 * xi)
    assert out.cycle_mean == pytest.approx(1.5)
    assert out.status == "pass"
    assert math.isfinite(out.quantities["K(1)"])
    assert "main cycle mean" in out.summary()


def test_heavy_repair_gives_infinite_bound():
    rs = ReliabilitySpec(G.constant(1.0), G.rational(2.0, 0, 1, 1), G.constant(0.5), boost=0.5)
    out = analyze(rs, runs=400, seed=0)
    assert math.isinf(out.quantities["Xi(1)"]) and math.isinf(out.quantities["K(1)"])
    assert out.failing
    assert out.status == "pass"
    assert any(r.verdict == "skipped" for r in out.report.records)
