import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from oracles import FROZEN, cumulative
from qrcbound.errors import InvalidModelError
from qrcbound.intensity import GeneralizedIntensity as G


def laws():
    """Hypothesis strategy over closed-family intensities, some with atoms."""
    pos = st.floats(0.2, 3.0)
    const = pos.map(G.constant)
    power = st.tuples(pos, st.floats(0.0, 2.0)).map(lambda t: G.power(*t))
    rational = st.tuples(pos, st.floats(0.0, 1.0), st.floats(0.5, 2.0), st.floats(0.0, 1.0)).map(
        lambda t: G.rational(t[0], t[1], t[2], t[3])
    )
    base = st.one_of(const, power, rational)
    atoms = st.lists(st.tuples(st.floats(0.1, 5.0), st.floats(0.05, 0.95)), max_size=2, unique_by=lambda a: round(a[0], 3))
    return st.tuples(base, atoms).map(lambda t: G.build(t[0].terms, [(round(a, 3), w) for a, w in t[1]]))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def test_atom_at_zero_rejected():
    with pytest.raises(InvalidModelError):
        G.constant(1.0, atoms=[(0.0, 0.5)])


@pytest.mark.parametrize("mass", [0.0, 1.5, -0.1])
def test_bad_atom_mass_rejected(mass):
    with pytest.raises(InvalidModelError):
        G.constant(1.0, atoms=[(1.0, mass)])


def test_negative_hazard_rejected():
    with pytest.raises(InvalidModelError):
        G.piecewise([0, 1], [1, -1])


# ---------------------------------------------------------------------------
# hazard calculus against quadrature
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "gi, h",
    [
        (G.constant(1.7), lambda s: 1.7),
        (G.power(2.0, 1.5), lambda s: 2.0 * s**1.5),
        (G.rational(1.0, 0.5, 2.0, 1.0), lambda s: (1 + 0.5 * s) / (2 + s)),
        (G.piecewise([0, 1, 3], [0.5, 2.0, 1.0]), lambda s: np.interp(s, [0, 1, 3], [0.5, 2.0, 1.0])),
    ],
)
def test_cumulative_matches_quadrature(gi, h):
    for x in (0.3, 1.0, 2.5, 7.0):
        assert float(gi.cumulative_hazard(x)) == pytest.approx(cumulative(h, x), rel=1e-9, abs=1e-12)


def test_survival_jumps_at_atom():
    gi = G.constant(1.0, atoms=[(1.0, 0.4)])
    before = float(gi.survival(1.0 - 1e-12))
    at = float(gi.survival(1.0))
    assert at == pytest.approx(before * 0.6, rel=1e-9)


def test_density_integrates_to_continuous_mass():
    gi = G.power(1.0, 1.0, atoms=[(1.2, 0.3)])
    cont = integrate.quad(lambda x: float(gi.density(x)), 0, 20, points=[1.2])[0]
    assert cont + sum(gi.atom_masses) == pytest.approx(1.0, abs=1e-8)


# ---------------------------------------------------------------------------
# sampling and quantiles
# ---------------------------------------------------------------------------


def test_exponential_sample_mean():
    x = G.constant(2.0).sample(np.random.default_rng(1), 100_000)
    assert abs(x.mean() - 0.5) <= 3 * x.std() / math.sqrt(x.size)


def test_sample_ks_power_law():
    gi = G.power(1.0, 1.0)
    x = gi.sample(np.random.default_rng(2), 50_000)
    assert stats.kstest(x, gi.cdf).pvalue > 0.01


def test_defective_law_returns_inf_with_defect_frequency():
    gi = G.piecewise([0, 1], [1, 0])
    defect = gi.defect
    ref = math.exp(-integrate.quad(lambda s: max(0.0, 1 - s), 0, 1)[0])
    assert defect == pytest.approx(ref, abs=1e-12)
    x = gi.sample(np.random.default_rng(3), 100_000)
    p = np.isinf(x).mean()
    assert abs(p - defect) <= 3 * math.sqrt(defect * (1 - defect) / x.size)


def test_atom_is_returned_exactly():
    gi = G.constant(1.0, atoms=[(1.5, 0.5)])
    x = gi.sample(np.random.default_rng(4), 100_000)
    at = np.mean(x == 1.5)
    p = float(gi.atom_masses[0])
    assert abs(at - p) <= 3 * math.sqrt(p * (1 - p) / x.size)


@given(laws(), st.floats(0.01, 0.99))
def test_quantile_inverts_cdf(gi, u):
    q = float(gi.quantile(u))
    assert float(gi.cdf(q)) >= u - 1e-9
    if q > 1e-9:
        assert float(gi.cdf(q * (1 - 1e-7) - 1e-12)) <= u + 1e-9


@given(laws(), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_cdf_monotone(gi, a, b):
    lo, hi = sorted((a, b))
    assert float(gi.cdf(lo)) <= float(gi.cdf(hi)) + 1e-15


def test_quantile_vectorized_shapes():
    gi = G.constant(1.0, atoms=[(1.0, 0.5)])
    u = np.linspace(0.05, 0.95, 12).reshape(3, 4)
    assert gi.quantile(u).shape == (3, 4)


# ---------------------------------------------------------------------------
# superposition and residuals
# ---------------------------------------------------------------------------


def test_superpose_shared_atom_mass():
    a = G.constant(1.0, atoms=[(1.0, 0.5)])
    b = G.power(1.0, 1.0, atoms=[(1.0, 0.5)])
    s = a.superpose(b)
    assert s.atom_locs == (1.0,)
    assert s.atom_conditional_masses[0] == pytest.approx(FROZEN["atom_min_mass"], abs=1e-12)


@given(laws(), laws(), st.floats(0.05, 6.0))
def test_superpose_survival_is_product(a, b, x):
    s = a.superpose(b)
    assert float(s.survival(x)) == pytest.approx(float(a.survival(x)) * float(b.survival(x)), rel=1e-9, abs=1e-300)


def test_superpose_sampling_matches_min():
    a, b = G.constant(0.7), G.power(1.0, 2.0)
    rng = np.random.default_rng(5)
    m = np.minimum(a.sample(rng, 100_000), b.sample(rng, 100_000))
    assert stats.kstest(m, a.superpose(b).cdf).pvalue > 0.01


def test_residual_at_zero_is_identity():
    gi = G.power(1.0, 1.0, atoms=[(2.0, 0.2)])
    assert gi.residual(0.0) is gi


def test_residual_shifts_hazard():
    r = G.power(1.0, 1.0).residual(1.0)
    s = np.array([0.0, 0.5, 2.0])
    np.testing.assert_allclose(r.hazard(s), 1.0 + s)
    assert r.moment(1) == pytest.approx(FROZEN["shifted_weibull_mean"], rel=1e-6)


@given(laws(), st.floats(0.0, 3.0), st.floats(0.01, 3.0))
def test_residual_survival_is_conditional(gi, a, x):
    sa = float(gi.survival(a))
    if sa < 1e-8:
        return
    assert float(gi.residual(a).survival(x)) == pytest.approx(float(gi.survival(a + x)) / sa, rel=1e-7, abs=1e-12)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def test_moment_closed_forms():
    assert G.constant(2.0).moment(1) == pytest.approx(0.5, rel=1e-6)
    uniform = G.rational(1, 0, 1, -1)
    assert uniform.moment(1) == pytest.approx(FROZEN["uniform_mean"], rel=1e-6)
    atom = G.build([], [(2.0, 1.0)])
    assert atom.moment(1) == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("c, k", [(2.0, 2.0), (1.0, 1.0), (1.5, 2.0)])
def test_heavy_tail_moment_is_inf(c, k):
    assert math.isinf(G.rational(c, 0, 1, 1).moment(k))


def test_light_enough_tail_moment_is_finite():
    # survival (1+s)^-3 has E X^2 = 2 * B(2, 1) = 1
    assert G.rational(3.0, 0, 1, 1).moment(2) == pytest.approx(1.0, rel=1e-6)


def test_hazard_divergence_proxy():
    assert G.constant(1.0).hazard_diverges()
    assert not G.piecewise([0, 1], [1, 0]).hazard_diverges()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


@given(laws())
def test_dict_round_trip(gi):
    d = json.loads(json.dumps(gi.to_dict()))
    back = G.from_dict(d)
    assert back.to_dict() == gi.to_dict()
    for x in (0.3, 1.0, 4.0):
        assert float(back.survival(x)) == pytest.approx(float(gi.survival(x)), rel=1e-12)


def test_grammar_example():
    d = {"shape": "power", "params": [1.0, 1.0], "atoms": [{"at": 1.0, "mass": 0.5}], "delay_T": 0.0}
    gi = G.from_dict(d)
    assert gi.atom_locs == (1.0,)
    assert gi.atom_conditional_masses[0] == pytest.approx(0.5)


def test_unknown_shape_rejected():
    with pytest.raises(InvalidModelError):
        G.from_dict({"shape": "weibull", "params": [1, 2]})
