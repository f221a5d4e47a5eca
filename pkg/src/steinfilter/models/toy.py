"""Small synthetic models used by diagnostics, demos, and tests."""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from ..core import ControlInput, Observation, RngStream, StateVector
from .base import ObservationModel, TransitionModel


class RandomWalkTransition(TransitionModel):
    """``x' = x + u + noise`` with independent per-dimension noise stds.

    A zero noise std makes this the identity map, handy for static-target
    tests; a small std is the usual diffuse prior for tracking a constant.
    """

    def __init__(self, dim: int, noise_std: Union[float, np.ndarray] = 0.0):
        self.dim = int(dim)
        std = np.broadcast_to(np.asarray(noise_std, dtype=np.float64), (self.dim,))
        if np.any(std < 0):
            raise ValueError("noise_std must be nonnegative")
        self.noise_std = std.copy()

    @property
    def state_dim(self) -> int:
        return self.dim

    @property
    def process_noise_cov(self) -> np.ndarray:
        return np.diag(self.noise_std**2)

    def propagate_deterministic(self, x: StateVector, u: Optional[ControlInput]) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x + np.asarray(u, dtype=np.float64) if u is not None else x.copy()

    def propagate(self, x: StateVector, u: Optional[ControlInput], rng: RngStream) -> np.ndarray:
        return self.propagate_deterministic(x, u) + self.noise_std * rng.normal(size=self.dim)

    def propagate_many(self, states: np.ndarray, u, rng: RngStream) -> np.ndarray:
        out = states + self.noise_std * rng.normal(size=states.shape)
        if u is not None:
            out = out + np.asarray(u, dtype=np.float64)
        return out


class MirroredGaussianModel(ObservationModel):
    """Sign-ambiguous scalar sensor: ``p(z|x) = 0.5 N(z; x, s^2) + 0.5 N(z; -x, s^2)``.

    The posterior in ``x`` given a single reading has symmetric modes at
    ``+-z``, which makes this the minimal multimodal update: a filter that
    collapses diversity loses one of the modes.
    """

    def __init__(self, noise_std: float):
        if noise_std <= 0:
            raise ValueError("noise_std must be positive")
        self.noise_std = float(noise_std)

    def _branches(self, x: np.ndarray, z: float):
        s2 = self.noise_std**2
        a_pos = -0.5 * (z - x) ** 2 / s2
        a_neg = -0.5 * (z + x) ** 2 / s2
        return a_pos, a_neg, s2

    def log_likelihood(self, x: StateVector, z: Observation) -> float:
        return float(self.log_likelihood_many(np.asarray(x, dtype=np.float64)[None, :], z)[0])

    def score(self, x: StateVector, z: Observation) -> np.ndarray:
        return self.score_many(np.asarray(x, dtype=np.float64)[None, :], z)[0]

    @property
    def has_curvature(self) -> bool:
        return True

    def curvature(self, x: StateVector, z: Observation) -> np.ndarray:
        # Both branches share the Gauss-Newton curvature 1/s^2.
        return np.array([[1.0 / self.noise_std**2]])

    def curvature_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        a = self.curvature(states[0], z)
        return np.broadcast_to(a, (states.shape[0], 1, 1))

    def log_likelihood_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        x = states[:, 0]
        zval = float(np.asarray(z).reshape(-1)[0])
        a_pos, a_neg, s2 = self._branches(x, zval)
        const = -0.5 * np.log(2.0 * np.pi * s2) - np.log(2.0)
        return const + np.logaddexp(a_pos, a_neg)

    def score_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        x = states[:, 0]
        zval = float(np.asarray(z).reshape(-1)[0])
        a_pos, a_neg, s2 = self._branches(x, zval)
        w_pos = 1.0 / (1.0 + np.exp(a_neg - a_pos))
        grad = w_pos * (zval - x) / s2 + (1.0 - w_pos) * (-(zval + x) / s2)
        return grad[:, None]

    def sample_observation(self, x: StateVector, rng) -> np.ndarray:
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        return np.array([sign * float(x[0]) + self.noise_std * float(rng.normal())])
