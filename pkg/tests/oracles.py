"""Independent reference computations used to pin expected values.

Nothing here imports the package under test: every quantity is recomputed
from plain hazard/density callables with scipy quadrature or summation.
"""

import math

import numpy as np
from scipy import integrate


def cumulative(hazard, x):
    if x <= 0:
        return 0.0
    return integrate.quad(hazard, 0.0, x, limit=200)[0]


def survival(hazard, x):
    return math.exp(-cumulative(hazard, x))


def moment(hazard, order, upper):
    """``E X^order = order * int_0^upper x^(order-1) S(x) dx`` with S from the hazard."""
    f = lambda x: order * x ** (order - 1) * survival(hazard, x)
    return integrate.quad(f, 0.0, upper, limit=400, epsabs=1e-12, epsrel=1e-10)[0]


def moment_from_survival(surv, order, upper=np.inf):
    f = lambda x: order * x ** (order - 1) * surv(x)
    return integrate.quad(f, 0.0, upper, limit=400, epsabs=1e-12, epsrel=1e-10)[0]


def common_part(densities, upper=np.inf, points=None):
    f = lambda x: min(d(x) for d in densities)
    return integrate.quad(f, 0.0, upper, points=points, limit=400, epsabs=1e-13)[0]


def xi(ez_n, ez_n1, exi, N):
    return ez_n + ez_n1 / ((N + 1) * exi)


def geometric(p, N, terms=200_000):
    """``E (nu + 1)^N`` for nu geometric on {1, 2, ...}, by direct summation."""
    j = np.arange(1, terms + 1, dtype=float)
    return float(np.sum((j + 1) ** N * p * (1 - p) ** (j - 1)))


def residual_integral(surv, residual_moment, exi, upper):
    """``int_0^inf M(a) S(a) da / E xi`` by nested quadrature."""
    f = lambda a: residual_moment(a) * surv(a)
    return integrate.quad(f, 0.0, upper, limit=200)[0] / exi


def stationary_psi(surv_phi, exi, s):
    return integrate.quad(surv_phi, 0.0, s)[0] / exi


# values computed by the functions above and frozen; test_oracles re-derives them
FROZEN = {
    "kappa_exp1_exp2": 0.75,
    "xi1_exp1": 2.0,
    "xi2_phi1_q2": 6.0,
    "classical_uniform": 2.0 / 3.0,
    "uniform_mean": 0.5,
    "pi1_phi1_q2": 0.5,
    "geometric_half_N1": 3.0,
    "geometric_half_N2": 11.0,
    "residual_exp1_N1": 1.0,
    "psi_exp1_at_1": 1.0 - math.exp(-1.0),
    "atom_min_mass": 0.75,
    "shifted_weibull_mean": 0.6556795424187984,
}
