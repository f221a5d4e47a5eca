"""Evaluation statistics: trajectory RMSE, quantiles, ESS, mode coverage."""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from .core import ParticleSet


def _error_matrix(estimates, truth, dims=None, period=None) -> np.ndarray:
    est = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    tru = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if est.shape != tru.shape:
        raise ValueError(f"length/shape mismatch: {est.shape} vs {tru.shape}")
    if est.shape[0] < 1:
        raise ValueError("need at least one time step")
    err = est - tru
    if period is not None:
        per = np.broadcast_to(np.asarray(period, dtype=np.float64), (err.shape[1],))
        active = per > 0
        wrapped = (err[:, active] + per[active] / 2.0) % per[active] - per[active] / 2.0
        err[:, active] = wrapped
    if dims is not None:
        err = err[:, list(dims)]
    return err


def rmse_trajectory(estimates, truth, dims: Optional[Sequence[int]] = None, period=None) -> float:
    """Root mean square of per-step error norms, restricted to ``dims``.

    ``period`` (scalar or per-dimension, 0 meaning linear) wraps differences
    for angular components before the norm is taken.
    """
    err = _error_matrix(estimates, truth, dims, period)
    return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


def error_norms(estimates, truth, dims: Optional[Sequence[int]] = None, period=None) -> np.ndarray:
    """Per-step Euclidean error norms (the inputs to quantile reporting)."""
    err = _error_matrix(estimates, truth, dims, period)
    return np.sqrt(np.sum(err**2, axis=1))


def quantiles(errors, q: Sequence[float]) -> List[float]:
    """Linear-interpolation quantiles of a nonempty error sequence."""
    arr = np.asarray(errors, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("quantiles of an empty sequence")
    qs = np.asarray(list(q), dtype=np.float64)
    if np.any(qs < 0) or np.any(qs > 1):
        raise ValueError("quantile fractions must lie in [0, 1]")
    return [float(v) for v in np.quantile(arr, qs)]


def effective_sample_size(weights) -> float:
    """Diversity of a normalized weight vector: ``1 / sum(w^2)`` in [1, N]."""
    w = np.asarray(weights, dtype=np.float64)
    return float(1.0 / np.sum(w**2))


def mode_coverage(p: ParticleSet, modes: Sequence[np.ndarray], radius: float) -> List[float]:
    """Fraction of particles within ``radius`` of each mode.

    Every particle is assigned to its nearest mode (ties to the lower
    index), so overlapping radii never double-count.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    centers = np.atleast_2d(np.asarray(modes, dtype=np.float64))
    if centers.shape[0] == 0:
        raise ValueError("need at least one mode")
    dist = np.linalg.norm(p.states[:, None, :] - centers[None, :, :], axis=2)
    nearest = np.argmin(dist, axis=1)  # argmin takes the lowest index on ties
    within = dist[np.arange(p.n), nearest] <= radius
    counts = np.bincount(nearest[within], minlength=centers.shape[0])
    return [float(c) / p.n for c in counts]
