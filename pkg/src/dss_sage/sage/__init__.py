"""Direction-scan SAGE estimator and the plane/spherical-wave baselines."""

from .core import (
    closed_form_gain_phase,
    coarse_estimate,
    coherent_objective,
    e_step,
    fine_delay,
    global_log_likelihood,
    lambda_prime,
    reconstruct,
    reference_delay,
    sample_window,
)
from .estimators import (
    ESTIMATORS,
    alpha_threshold,
    m_step,
    run_dss_o_sage,
    run_estimator,
    run_noise_elimination,
    run_pwf_sage,
    run_sage,
    run_swf_sage,
)
from .model import EstimationResult, EstimatorConfig, EvalCounters, PathEstimate
from .search import SideObjective, SideSearch, distance_bounds, local_region

__all__ = [
    "ESTIMATORS",
    "EstimationResult",
    "EstimatorConfig",
    "EvalCounters",
    "PathEstimate",
    "SideObjective",
    "SideSearch",
    "alpha_threshold",
    "closed_form_gain_phase",
    "coarse_estimate",
    "coherent_objective",
    "distance_bounds",
    "e_step",
    "fine_delay",
    "global_log_likelihood",
    "lambda_prime",
    "local_region",
    "m_step",
    "reconstruct",
    "reference_delay",
    "run_dss_o_sage",
    "run_estimator",
    "run_noise_elimination",
    "run_pwf_sage",
    "run_sage",
    "run_swf_sage",
    "sample_window",
]
