"""Bounds and Monte Carlo checks for renewal-type processes with bracketed hazards."""

from .bounds import LordenBounds, classical_lorden, compute_bounds, convergence_constant, optimize_theta, xi_bound
from .coupling import MaximalCoupler, build_coupler, common_part
from .intensity import GeneralizedIntensity
from .model import ProcessSpec
from .process import simulate_batch, simulate_coupled
from .reliability import ReliabilitySpec, analyze
from .verify import ExperimentPlan, run_verification

__version__ = "0.1.0"

__all__ = [
    "GeneralizedIntensity",
    "ProcessSpec",
    "MaximalCoupler",
    "build_coupler",
    "common_part",
    "LordenBounds",
    "classical_lorden",
    "compute_bounds",
    "convergence_constant",
    "optimize_theta",
    "xi_bound",
    "simulate_batch",
    "simulate_coupled",
    "ExperimentPlan",
    "run_verification",
    "ReliabilitySpec",
    "analyze",
]
