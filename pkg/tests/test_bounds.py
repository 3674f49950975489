import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from oracles import FROZEN
from qrcbound import bounds as bd
from qrcbound.errors import InfeasibleOptimizationError
from qrcbound.intensity import GeneralizedIntensity as G
from qrcbound.model import ProcessSpec


def exp_spec(phi=1.0, Q=1.0, m=1, k=2.0):
    return ProcessSpec.homogeneous(m, G.constant(phi), G.constant(Q), mu=Q - phi, k=k)


def power_spec(m=1):
    phi = G.power(1.0, 1.0)
    return ProcessSpec.homogeneous(m, phi, G.build(phi.terms + G.constant(1.0).terms), k=3.0)


# ---------------------------------------------------------------------------
# Xi and the classical inequality
# ---------------------------------------------------------------------------


def test_xi_exponential_equals_classical():
    spec = exp_spec()
    assert bd.xi_bound(spec, 1) == pytest.approx(FROZEN["xi1_exp1"], abs=1e-9)
    assert bd.classical_lorden(spec.phi) == pytest.approx(FROZEN["xi1_exp1"], abs=1e-9)


def test_xi_second_order_with_faster_majorant():
    assert bd.xi_bound(exp_spec(1.0, 2.0, k=3.0), 2) == pytest.approx(FROZEN["xi2_phi1_q2"], abs=1e-8)


def test_classical_uniform():
    assert bd.classical_lorden(G.rational(1, 0, 1, -1)) == pytest.approx(FROZEN["classical_uniform"], abs=1e-6)


def test_xi_against_quadrature_for_power_law():
    spec = power_spec()
    h_phi = lambda s: s
    h_q = lambda s: s + 1
    ref = oracles.xi(oracles.moment(h_phi, 1, 15), oracles.moment(h_phi, 2, 15), oracles.moment(h_q, 1, 15), 1)
    assert bd.xi_bound(spec, 1) == pytest.approx(ref, rel=1e-7)


def test_order_outside_range_rejected():
    with pytest.raises(ValueError):
        bd.xi_bound(exp_spec(k=2.0), 2)


def test_xi_infinite_for_heavy_phi():
    spec = ProcessSpec.homogeneous(1, G.rational(2.0, 0, 1, 1), G.rational(2.0, 0, 1, 1), k=2.0)
    assert math.isinf(bd.xi_bound(spec, 1))


# ---------------------------------------------------------------------------
# probabilities
# ---------------------------------------------------------------------------


def test_pi0_example():
    assert bd.pi0(exp_spec(), 4.0) == pytest.approx(0.5, abs=1e-12)


def test_pi0_needs_threshold_above_xi():
    with pytest.raises(ValueError):
        bd.pi0(exp_spec(), 1.5)


def test_pi1_constant_case():
    v = bd.pi1(exp_spec(1.0, 2.0), 5.0)
    assert v <= FROZEN["pi1_phi1_q2"] + 1e-12
    assert v == pytest.approx(FROZEN["pi1_phi1_q2"], abs=1e-5)


def test_pi1_equal_brackets_is_one():
    assert bd.pi1(exp_spec(), 10.0) == pytest.approx(1.0, abs=1e-5)


def test_pi1_against_direct_minimization():
    spec = power_spec()
    theta = 4.0

    def floor(x):
        a = np.linspace(0, theta, 801)
        dens = (a + x) * np.exp(-((a + x) ** 2 - a**2) / 2 - x)
        return dens.min()

    from scipy import integrate

    ref = integrate.quad(floor, 0, 12, limit=400)[0]
    v = bd.pi1(spec, theta)
    assert v <= ref + 1e-6
    assert v == pytest.approx(ref, abs=2e-4)


@given(st.floats(0.02, 1.0), st.sampled_from([1.0, 2.0, 1.5]))
def test_geometric_moment_matches_summation(p, N):
    assert bd.geometric_moment(p, N) == pytest.approx(oracles.geometric(p, N, terms=4000 if p > 0.05 else 200_000), rel=1e-8)


def test_geometric_closed_forms():
    assert bd.geometric_moment(0.5, 1) == pytest.approx(FROZEN["geometric_half_N1"], abs=1e-9)
    assert bd.geometric_moment(0.5, 2) == pytest.approx(FROZEN["geometric_half_N2"], abs=1e-9)


# ---------------------------------------------------------------------------
# coupling-epoch and convergence constants
# ---------------------------------------------------------------------------


def test_epoch_bound_synchronous_exponential():
    spec = exp_spec()
    lb = bd.compute_bounds(spec, theta=20.0)
    expected = 1.0 + (1.0 / lb.pi + 1.0) * FROZEN["xi1_exp1"] + 1.0
    assert lb.T_of_a([0.0], 1) == pytest.approx(expected, rel=1e-9)


def test_residual_moment_grows_with_age_for_decreasing_hazard():
    spec = ProcessSpec.homogeneous(1, G.rational(3, 0, 1, 1), G.rational(3, 0, 1, 1))
    vals = [bd.residual_moment(spec, a, 1) for a in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    # Lomax residual mean (1 + a)/(c - 1)
    np.testing.assert_allclose(vals, [(1 + a) / 2 for a in (0.0, 0.5, 1.0, 2.0, 4.0)], rtol=1e-6)


def test_stationary_residual_two_routes_agree():
    spec = power_spec()
    for N in (1.0, 2.0):
        closed = bd._stationary_residual_closed(spec, N)
        nested = bd.stationary_residual_integral(spec, N)
        assert closed == pytest.approx(nested, rel=1e-6)


def test_stationary_residual_against_oracle():
    spec = exp_spec()
    ref = oracles.residual_integral(lambda a: math.exp(-a), lambda a: 1.0, 1.0, 60)
    assert bd._stationary_residual_closed(spec, 1.0) == pytest.approx(ref, abs=1e-9)
    assert ref == pytest.approx(FROZEN["residual_exp1_N1"], abs=1e-9)


def test_convergence_constant_arithmetic():
    spec = exp_spec()
    theta = 20.0
    K, br = bd.convergence_constant(spec, 1.0, theta, pi1_value=1.0)
    p = (1 - 2.0 / theta) ** 2
    geo = 1.0 / p + 1.0
    assert K == pytest.approx(1.0 * 1.0 + geo * 2.0 + 1.0, rel=1e-9)
    assert br.pi == pytest.approx(p, rel=1e-12)
    names = [r[1] for r in br.rows()]
    assert "K(1)" in names and "pi1" in names


def test_convergence_constant_infinite_for_heavy_phi():
    spec = ProcessSpec.homogeneous(1, G.rational(2.0, 0, 1, 1), G.rational(2.0, 0, 1, 1), k=2.0)
    K, br = bd.convergence_constant(spec, 1.0, 50.0)
    assert math.isinf(K)
    assert br.failing


def test_optimize_theta_against_scan():
    spec = power_spec()
    th, K = bd.optimize_theta(spec, 1.0)
    grid = np.linspace(6.0, 11.5, 101)
    scan = np.array([bd.convergence_constant(spec, 1.0, t)[0] for t in grid])
    i = int(np.argmin(scan))
    assert K <= scan[i] * (1 + 1e-9)
    assert abs(th - grid[i]) <= 2 * (grid[1] - grid[0])


def test_optimize_theta_infeasible_for_heavy_phi():
    spec = ProcessSpec.homogeneous(1, G.rational(2.0, 0, 1, 1), G.rational(2.0, 0, 1, 1), k=2.0)
    with pytest.raises(InfeasibleOptimizationError):
        bd.optimize_theta(spec, 1.0)


# ---------------------------------------------------------------------------
# stationary tail
# ---------------------------------------------------------------------------


def test_stationary_tail_limits():
    assert bd.stationary_tail(exp_spec(), 60.0) == pytest.approx(1.0, abs=1e-9)
    spec = exp_spec(1.0, 2.0)
    assert bd.stationary_tail(spec, 60.0, clamp=False) == pytest.approx(2.0, abs=1e-8)
    assert bd.stationary_tail(spec, 60.0) == 1.0


def test_stationary_tail_at_one():
    assert bd.stationary_tail(exp_spec(), 1.0) == pytest.approx(FROZEN["psi_exp1_at_1"], abs=1e-10)


@given(st.floats(0.0, 8.0), st.floats(0.0, 8.0))
def test_stationary_tail_monotone(s1, s2):
    spec = power_spec()
    lo, hi = sorted((s1, s2))
    assert bd.stationary_tail(spec, lo) <= bd.stationary_tail(spec, hi) + 1e-12
