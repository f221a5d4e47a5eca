"""Planar constant-velocity motion and a position-only sensor.

State layout is ``(px, py, vx, vy)`` in meters and meters per step. One step
shifts position by the current velocity, then perturbs the velocity with
isotropic Gaussian acceleration noise.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import ControlInput, Observation, RngStream, StateVector
from .base import ObservationModel, TransitionModel


class ConstantVelocityModel(TransitionModel):
    """Constant-velocity propagation with acceleration noise ``sigma_a``."""

    def __init__(self, accel_noise_std: float, dt: float = 1.0):
        if accel_noise_std < 0:
            raise ValueError("accel_noise_std must be nonnegative")
        self.accel_noise_std = float(accel_noise_std)
        self.dt = float(dt)

    @property
    def state_dim(self) -> int:
        return 4

    @property
    def process_noise_cov(self) -> np.ndarray:
        s2 = self.accel_noise_std**2
        return np.diag([0.0, 0.0, s2, s2])

    def propagate_deterministic(self, x: StateVector, u: Optional[ControlInput]) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = x.copy()
        out[0] += x[2] * self.dt
        out[1] += x[3] * self.dt
        return out

    def propagate(self, x: StateVector, u: Optional[ControlInput], rng: RngStream) -> np.ndarray:
        out = self.propagate_deterministic(x, u)
        out[2:4] += self.accel_noise_std * rng.normal(size=2)
        return out

    def propagate_many(self, states: np.ndarray, u, rng: RngStream) -> np.ndarray:
        out = states.copy()
        out[:, 0] += states[:, 2] * self.dt
        out[:, 1] += states[:, 3] * self.dt
        out[:, 2:4] += self.accel_noise_std * rng.normal(size=(states.shape[0], 2))
        return out


class PositionObservationModel(ObservationModel):
    """Gaussian observation of the first two state components.

    Models a fixed scanner reporting the tracked object's planar position
    with isotropic noise; velocity components are unobserved.
    """

    def __init__(self, noise_std: float, state_dim: int = 4):
        if noise_std <= 0:
            raise ValueError("noise_std must be positive")
        self.noise_std = float(noise_std)
        self.state_dim = int(state_dim)
        self._const = -np.log(2.0 * np.pi * noise_std**2)

    def log_likelihood(self, x: StateVector, z: Observation) -> float:
        r = np.asarray(z, dtype=np.float64) - np.asarray(x, dtype=np.float64)[:2]
        return float(self._const - 0.5 * (r @ r) / self.noise_std**2)

    def score(self, x: StateVector, z: Observation) -> np.ndarray:
        out = np.zeros(self.state_dim)
        r = np.asarray(z, dtype=np.float64) - np.asarray(x, dtype=np.float64)[:2]
        out[:2] = r / self.noise_std**2
        return out

    @property
    def has_curvature(self) -> bool:
        return True

    def curvature(self, x: StateVector, z: Observation) -> np.ndarray:
        a = np.zeros((self.state_dim, self.state_dim))
        a[0, 0] = a[1, 1] = 1.0 / self.noise_std**2
        return a

    def log_likelihood_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        r = np.asarray(z, dtype=np.float64)[None, :] - states[:, :2]
        return self._const - 0.5 * np.einsum("ni,ni->n", r, r) / self.noise_std**2

    def score_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        out = np.zeros_like(states)
        r = np.asarray(z, dtype=np.float64)[None, :] - states[:, :2]
        out[:, :2] = r / self.noise_std**2
        return out

    def sample_observation(self, x: StateVector, rng: RngStream) -> np.ndarray:
        return np.asarray(x, dtype=np.float64)[:2] + self.noise_std * rng.normal(size=2)
