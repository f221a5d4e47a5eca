"""Abstract process and observation model interfaces.

Concrete models implement single-state methods; the ``*_many`` batch hooks
have loop defaults and are overridden with vectorized numpy where it pays
off. All models are immutable after construction, so likelihood and score
evaluations may run for all particles in parallel.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..core import ControlInput, Observation, RngStream, StateVector


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    wrapped = np.mod(-np.asarray(theta) + np.pi, 2.0 * np.pi)
    return -(wrapped - np.pi)


class TransitionModel(ABC):
    """State propagation ``x' = f(x, u, v)`` with process noise ``v``."""

    @property
    @abstractmethod
    def state_dim(self) -> int: ...

    @property
    @abstractmethod
    def process_noise_cov(self) -> np.ndarray:
        """Covariance of the additive effect of one noise draw (d x d)."""

    @abstractmethod
    def propagate(self, x: StateVector, u: Optional[ControlInput], rng: RngStream) -> np.ndarray:
        """One stochastic propagation with a single noise draw."""

    @abstractmethod
    def propagate_deterministic(self, x: StateVector, u: Optional[ControlInput]) -> np.ndarray:
        """Noise-free propagation; equals :meth:`propagate` when noise is zero."""

    def propagate_many(
        self, states: np.ndarray, u: Optional[ControlInput], rng: RngStream
    ) -> np.ndarray:
        out = np.empty_like(states)
        for j in range(states.shape[0]):
            out[j] = self.propagate(states[j], u, rng)
        return out


class ObservationModel(ABC):
    """Observation likelihood ``p(z | x)`` with an exact score in ``x``."""

    @abstractmethod
    def log_likelihood(self, x: StateVector, z: Observation) -> float: ...

    @abstractmethod
    def score(self, x: StateVector, z: Observation) -> np.ndarray:
        """Gradient of :meth:`log_likelihood` with respect to the state."""

    @property
    def has_curvature(self) -> bool:
        """Whether :meth:`curvature` is available."""
        return False

    def curvature(self, x: StateVector, z: Observation) -> np.ndarray:
        """Symmetric PSD local approximation of the negative log-likelihood Hessian."""
        raise NotImplementedError(f"{type(self).__name__} provides no curvature")

    def loglik_and_score(self, x: StateVector, z: Observation) -> Tuple[float, np.ndarray]:
        return self.log_likelihood(x, z), self.score(x, z)

    # Batch hooks -----------------------------------------------------------

    def log_likelihood_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        return np.array([self.log_likelihood(x, z) for x in states])

    def score_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        return np.stack([self.score(x, z) for x in states])

    def curvature_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        return np.stack([self.curvature(x, z) for x in states])


@dataclass(frozen=True)
class ModelPair:
    """The transition/observation pair a filter runs against."""

    transition: TransitionModel
    observation: ObservationModel
