"""Stein particle filtering for nonlinear, non-Gaussian state estimation.

A deterministic, gradient-driven particle flow plays the role of the update
step: particles move along a kernelized steepest direction of the
log-posterior, preconditioned per particle by limited-memory quasi-Newton
curvature. Bootstrap particle-filter and Kalman baselines, simulation
scenarios, and an experiment runner round out the package.
"""

from .core import (
    ParticleSet,
    RngStream,
    min_pairwise_distance,
    particle_mean_cov,
)
from .filters import (
    FilterConfig,
    FilterState,
    init_gaussian,
    init_uniform_poses,
    load_checkpoint,
    low_variance_resample,
    pf_step,
    reproject_to_leader,
    save_checkpoint,
    spf_predict,
    spf_step,
    spf_update,
    stein_transport,
    systematic_indices,
)
from .kernels import (
    GramResult,
    IsotropicRbf,
    ScaledRbf,
    gram_and_grads,
    median_heuristic,
    metric_from_curvature,
    rbf_eval,
    scaled_rbf_eval,
)
from .metrics import (
    effective_sample_size,
    error_norms,
    mode_coverage,
    quantiles,
    rmse_trajectory,
)
from .steinflow import (
    FilterPosterior,
    GaussianMixtureTarget,
    GaussianTarget,
    KdePriorApprox,
    PosteriorScore,
    phi_hat,
    score_batch,
    stein_trace_diagnostic,
    target_score_batch,
)

__version__ = "0.1.0"

__all__ = [
    "FilterConfig",
    "FilterPosterior",
    "FilterState",
    "GaussianMixtureTarget",
    "GaussianTarget",
    "GramResult",
    "IsotropicRbf",
    "KdePriorApprox",
    "ParticleSet",
    "PosteriorScore",
    "RngStream",
    "ScaledRbf",
    "effective_sample_size",
    "error_norms",
    "gram_and_grads",
    "init_gaussian",
    "init_uniform_poses",
    "load_checkpoint",
    "low_variance_resample",
    "median_heuristic",
    "metric_from_curvature",
    "min_pairwise_distance",
    "mode_coverage",
    "particle_mean_cov",
    "pf_step",
    "phi_hat",
    "quantiles",
    "rbf_eval",
    "reproject_to_leader",
    "rmse_trajectory",
    "save_checkpoint",
    "scaled_rbf_eval",
    "score_batch",
    "spf_predict",
    "spf_step",
    "spf_update",
    "stein_trace_diagnostic",
    "stein_transport",
    "systematic_indices",
    "target_score_batch",
]
