"""The kernelized transport direction and the densities it differentiates.

A *target* is anything exposing ``log_density_many`` and ``score_many`` over
a batch of states (optionally ``curvature_many``). The filter update's
target is the unnormalized posterior: observation log-likelihood plus the
log of a density fitted to the predicted particles. The normalization
constant never appears because only gradients of the log-target are used.

The transport direction for particle ``x^l`` combines kernel-weighted scores
(attraction toward probability mass) with kernel gradients (pairwise
repulsion that keeps the set spread over the target):

    phi[l] = (1/N) sum_j ( score[j] * K[j, l] + grad_K[j, l] )
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .core import Observation, ParticleSet, particle_mean_cov
from .kernels import GramResult
from .models.base import ObservationModel

#: Ridge added to fitted prior covariances before inversion.
PRIOR_COV_RIDGE = 1e-6


@dataclass(frozen=True)
class PosteriorScore:
    """Batched log-target gradients plus the (unnormalized) log-densities."""

    scores: np.ndarray  # (N, d)
    log_densities: np.ndarray  # (N,)


class GaussianTarget:
    """Multivariate normal with analytic score; also the fitted-prior backend."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.asarray(cov, dtype=np.float64)
        d = self.mean.shape[0]
        self.precision = np.linalg.inv(self.cov)
        sign, logdet = np.linalg.slogdet(self.cov)
        if sign <= 0:
            raise ValueError("covariance must be positive definite")
        self._const = -0.5 * (d * np.log(2.0 * np.pi) + logdet)

    @classmethod
    def fit(cls, particles: ParticleSet, ridge: float = PRIOR_COV_RIDGE) -> "GaussianTarget":
        """Moment-matched Gaussian over a particle set, ridge-regularized."""
        mean, cov = particle_mean_cov(particles)
        return cls(mean, cov + ridge * np.eye(particles.dim))

    def log_density_many(self, states: np.ndarray) -> np.ndarray:
        r = states - self.mean[None, :]
        return self._const - 0.5 * np.einsum("ni,ij,nj->n", r, self.precision, r)

    def score_many(self, states: np.ndarray) -> np.ndarray:
        return -(states - self.mean[None, :]) @ self.precision

    @property
    def has_curvature(self) -> bool:
        return True

    def curvature_many(self, states: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.precision, (states.shape[0],) + self.precision.shape)


class KdePriorApprox:
    """Kernel density over a particle set with a median-heuristic bandwidth.

    Alternative to the Gaussian fit when the predicted cloud is visibly
    multimodal; costs O(N) per evaluated state.
    """

    def __init__(self, particles: ParticleSet, bandwidth: Optional[float] = None):
        from .kernels import median_heuristic

        self.anchors = particles.states
        if bandwidth is None:
            bandwidth = median_heuristic(particles) if particles.n >= 2 else 1.0
        self.bandwidth = float(bandwidth)
        d = particles.dim
        self._const = -np.log(particles.n) - 0.5 * d * np.log(np.pi * self.bandwidth)

    def _log_terms(self, states: np.ndarray) -> np.ndarray:
        diff = states[:, None, :] - self.anchors[None, :, :]
        return -np.einsum("nmd,nmd->nm", diff, diff) / self.bandwidth

    def log_density_many(self, states: np.ndarray) -> np.ndarray:
        return logsumexp(self._log_terms(states), axis=1) + self._const

    def score_many(self, states: np.ndarray) -> np.ndarray:
        terms = self._log_terms(states)
        w = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
        diff = states[:, None, :] - self.anchors[None, :, :]
        return (-2.0 / self.bandwidth) * np.einsum("nm,nmd->nd", w, diff)

    @property
    def has_curvature(self) -> bool:
        return False


class GaussianMixtureTarget:
    """Weighted Gaussian mixture with analytic scores, for multimodal studies."""

    def __init__(self, means: Sequence[np.ndarray], covs: Sequence[np.ndarray], weights=None):
        self.components = [GaussianTarget(m, c) for m, c in zip(means, covs)]
        k = len(self.components)
        w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64)
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        self.log_weights = np.log(w / w.sum())

    def _component_logs(self, states: np.ndarray) -> np.ndarray:
        return np.stack(
            [c.log_density_many(states) + lw for c, lw in zip(self.components, self.log_weights)],
            axis=1,
        )

    def log_density_many(self, states: np.ndarray) -> np.ndarray:
        return logsumexp(self._component_logs(states), axis=1)

    def score_many(self, states: np.ndarray) -> np.ndarray:
        logs = self._component_logs(states)
        resp = np.exp(logs - logsumexp(logs, axis=1, keepdims=True))
        comp_scores = np.stack([c.score_many(states) for c in self.components], axis=1)
        return np.einsum("nk,nkd->nd", resp, comp_scores)

    @property
    def has_curvature(self) -> bool:
        return True

    def curvature_many(self, states: np.ndarray) -> np.ndarray:
        logs = self._component_logs(states)
        resp = np.exp(logs - logsumexp(logs, axis=1, keepdims=True))
        precs = np.stack([c.precision for c in self.components])
        return np.einsum("nk,kij->nij", resp, precs)


class FilterPosterior:
    """Unnormalized update-step target: likelihood times predicted-state prior."""

    def __init__(self, obs_model: ObservationModel, z: Observation, prior):
        self.obs_model = obs_model
        self.z = z
        self.prior = prior

    def log_density_many(self, states: np.ndarray) -> np.ndarray:
        return self.obs_model.log_likelihood_many(states, self.z) + self.prior.log_density_many(
            states
        )

    def score_many(self, states: np.ndarray) -> np.ndarray:
        return self.obs_model.score_many(states, self.z) + self.prior.score_many(states)

    @property
    def has_curvature(self) -> bool:
        return self.obs_model.has_curvature

    def curvature_many(self, states: np.ndarray) -> np.ndarray:
        a = self.obs_model.curvature_many(states, self.z)
        if getattr(self.prior, "has_curvature", False):
            a = a + self.prior.curvature_many(states)
        return a


def target_score_batch(p: ParticleSet, target) -> PosteriorScore:
    """Scores and log-densities of a target over a particle set."""
    scores = target.score_many(p.states)
    logd = target.log_density_many(p.states)
    bad = ~np.all(np.isfinite(scores), axis=1) | ~np.isfinite(logd)
    if np.any(bad):
        j = int(np.nonzero(bad)[0][0])
        raise FloatingPointError(f"non-finite score or log-density for particle {j}")
    return PosteriorScore(scores=scores, log_densities=logd)


def score_batch(p: ParticleSet, obs_model: ObservationModel, prior, z: Observation) -> PosteriorScore:
    """Posterior scores: observation score plus fitted-prior score, per particle."""
    return target_score_batch(p, FilterPosterior(obs_model, z, prior))


def phi_hat(p: ParticleSet, s, g: GramResult) -> np.ndarray:
    """Empirical steepest transport direction, one row per particle.

    ``s`` may be a :class:`PosteriorScore` or a raw (N, d) score matrix.
    """
    scores = s.scores if isinstance(s, PosteriorScore) else np.asarray(s, dtype=np.float64)
    n = p.n
    if scores.shape != (n, p.dim) or g.values.shape != (n, n):
        raise ValueError("inconsistent shapes between particles, scores, and Gram result")
    attract = g.values.T @ scores  # sum_j K[j, l] score[j]
    repulse = g.grad.sum(axis=0)  # sum_j grad_K[j, l]
    return (attract + repulse) / n


def stein_trace_diagnostic(
    p: ParticleSet,
    s,
    test_fn: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]],
) -> float:
    """Empirical expectation of the traced Stein operator.

    ``test_fn(x)`` returns the test function value (d,) and Jacobian (d, d).
    The expectation vanishes exactly when the particles are distributed as
    the target whose scores are supplied, so deviation from zero is a
    goodness-of-fit diagnostic.
    """
    scores = s.scores if isinstance(s, PosteriorScore) else np.asarray(s, dtype=np.float64)
    total = 0.0
    for x, sc in zip(p.states, scores):
        value, jac = test_fn(x)
        total += float(np.dot(value, sc) + np.trace(np.atleast_2d(jac)))
    return total / p.n
