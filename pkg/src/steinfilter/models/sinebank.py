"""Bank of sine functions observed at a common clock.

Function ``i`` predicts ``g_i(t) = A_i * sin(k * (t + phi_i))``. The state
interleaves amplitude and phase per function, ``[A_1, phi_1, A_2, phi_2,
...]``, giving dimension ``2 * n_fns``; the observation is the vector of
noisy function values at the current time. With a fixed period ``k`` and a
growing bank this is the standard high-dimensional tracking stress test:
the likelihood concentrates fast while its gradients stay cheap and exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..core import Observation, StateVector
from .base import ObservationModel


@dataclass(frozen=True)
class SineBankModel(ObservationModel):
    """Amplitude/phase observation model for ``n_fns`` sine functions."""

    n_fns: int
    period_k: float = 1.0
    obs_noise_std: float = 0.1
    t: float = 0.0

    def __post_init__(self):
        if self.n_fns < 1:
            raise ValueError("n_fns must be >= 1")
        if self.obs_noise_std <= 0:
            raise ValueError("obs_noise_std must be positive")

    @property
    def state_dim(self) -> int:
        return 2 * self.n_fns

    def at_time(self, t: float) -> "SineBankModel":
        """The same bank evaluated at a different clock value."""
        return dataclasses.replace(self, t=float(t))

    def _split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        return x[..., 0::2], x[..., 1::2]

    def predict(self, x: StateVector) -> np.ndarray:
        """Noise-free observation ``g_i(t)`` for each function."""
        amp, phase = self._split(x)
        return amp * np.sin(self.period_k * (self.t + phase))

    def log_likelihood(self, x: StateVector, z: Observation) -> float:
        return float(self.log_likelihood_many(np.asarray(x, dtype=np.float64)[None, :], z)[0])

    def score(self, x: StateVector, z: Observation) -> np.ndarray:
        return self.score_many(np.asarray(x, dtype=np.float64)[None, :], z)[0]

    @property
    def has_curvature(self) -> bool:
        return True

    def curvature(self, x: StateVector, z: Observation) -> np.ndarray:
        return self.curvature_many(np.asarray(x, dtype=np.float64)[None, :], z)[0]

    def log_likelihood_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        r = np.asarray(z, dtype=np.float64)[None, :] - self.predict(states)
        s2 = self.obs_noise_std**2
        const = -0.5 * self.n_fns * np.log(2.0 * np.pi * s2)
        return const - 0.5 * np.einsum("ni,ni->n", r, r) / s2

    def _jacobian_parts(self, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # dg_i/dA_i = sin(k(t + phi_i)); dg_i/dphi_i = A_i k cos(k(t + phi_i))
        amp, phase = self._split(states)
        arg = self.period_k * (self.t + phase)
        return np.sin(arg), amp * self.period_k * np.cos(arg)

    def score_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        r = np.asarray(z, dtype=np.float64)[None, :] - self.predict(states)
        d_amp, d_phase = self._jacobian_parts(states)
        s2 = self.obs_noise_std**2
        out = np.empty_like(states)
        out[:, 0::2] = r * d_amp / s2
        out[:, 1::2] = r * d_phase / s2
        return out

    def curvature_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        # Gauss-Newton J^T J / sigma^2; J is block diagonal with 1x2 blocks.
        d_amp, d_phase = self._jacobian_parts(states)
        s2 = self.obs_noise_std**2
        n, d = states.shape
        out = np.zeros((n, d, d))
        idx = np.arange(self.n_fns)
        out[:, 2 * idx, 2 * idx] = d_amp**2 / s2
        out[:, 2 * idx + 1, 2 * idx + 1] = d_phase**2 / s2
        out[:, 2 * idx, 2 * idx + 1] = d_amp * d_phase / s2
        out[:, 2 * idx + 1, 2 * idx] = d_amp * d_phase / s2
        return out

    def sample_observation(self, x: StateVector, rng) -> np.ndarray:
        return self.predict(np.asarray(x, dtype=np.float64)) + self.obs_noise_std * rng.normal(
            size=self.n_fns
        )
