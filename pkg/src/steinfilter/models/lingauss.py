"""Linear-Gaussian state-space model and the exact Kalman recursion.

This model doubles as the verification oracle: for linear dynamics with
Gaussian noise the Kalman filter is exact, so any particle method can be
checked against :func:`lingauss_step_oracle` on the same data.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..core import ControlInput, Observation, RngStream, StateVector
from .base import ObservationModel, TransitionModel


def _check_spd(name: str, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if not np.allclose(m, m.T):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc
    return m


class LinearGaussianModel(TransitionModel, ObservationModel):
    """``x' = F x + B u + v``, ``z = Hm x + n`` with ``v ~ N(0, Q)``, ``n ~ N(0, R)``."""

    def __init__(
        self,
        F: np.ndarray,
        Q: np.ndarray,
        Hm: np.ndarray,
        R: np.ndarray,
        B: Optional[np.ndarray] = None,
    ):
        self.F = np.asarray(F, dtype=np.float64)
        self.Q = _check_spd("Q", Q)
        self.Hm = np.atleast_2d(np.asarray(Hm, dtype=np.float64))
        self.R = _check_spd("R", R)
        d = self.F.shape[0]
        self.B = np.asarray(B, dtype=np.float64) if B is not None else np.zeros((d, 0))
        self._q_chol = np.linalg.cholesky(self.Q)
        self._r_chol = np.linalg.cholesky(self.R)
        self._r_inv = np.linalg.inv(self.R)
        self._obs_const = -0.5 * (
            self.Hm.shape[0] * np.log(2.0 * np.pi) + np.linalg.slogdet(self.R)[1]
        )

    # Transition side ---------------------------------------------------------

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]

    @property
    def process_noise_cov(self) -> np.ndarray:
        return self.Q

    def _drift(self, x: np.ndarray, u) -> np.ndarray:
        out = self.F @ x
        if u is not None and self.B.shape[1] > 0:
            out = out + self.B @ np.asarray(u, dtype=np.float64)
        return out

    def propagate_deterministic(self, x: StateVector, u: Optional[ControlInput]) -> np.ndarray:
        return self._drift(np.asarray(x, dtype=np.float64), u)

    def propagate(self, x: StateVector, u: Optional[ControlInput], rng: RngStream) -> np.ndarray:
        noise = self._q_chol @ rng.normal(size=self.state_dim)
        return self.propagate_deterministic(x, u) + noise

    def propagate_many(self, states: np.ndarray, u, rng: RngStream) -> np.ndarray:
        noise = rng.normal(size=states.shape) @ self._q_chol.T
        drift = states @ self.F.T
        if u is not None and self.B.shape[1] > 0:
            drift = drift + self.B @ np.asarray(u, dtype=np.float64)
        return drift + noise

    # Observation side --------------------------------------------------------

    def log_likelihood(self, x: StateVector, z: Observation) -> float:
        r = np.asarray(z, dtype=np.float64) - self.Hm @ np.asarray(x, dtype=np.float64)
        return float(self._obs_const - 0.5 * r @ self._r_inv @ r)

    def score(self, x: StateVector, z: Observation) -> np.ndarray:
        r = np.asarray(z, dtype=np.float64) - self.Hm @ np.asarray(x, dtype=np.float64)
        return self.Hm.T @ (self._r_inv @ r)

    @property
    def has_curvature(self) -> bool:
        return True

    def curvature(self, x: StateVector, z: Observation) -> np.ndarray:
        return self.Hm.T @ self._r_inv @ self.Hm

    def log_likelihood_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        r = np.asarray(z, dtype=np.float64)[None, :] - states @ self.Hm.T
        return self._obs_const - 0.5 * np.einsum("ni,ij,nj->n", r, self._r_inv, r)

    def score_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        r = np.asarray(z, dtype=np.float64)[None, :] - states @ self.Hm.T
        return r @ self._r_inv @ self.Hm

    def curvature_many(self, states: np.ndarray, z: Observation) -> np.ndarray:
        a = self.Hm.T @ self._r_inv @ self.Hm
        return np.broadcast_to(a, (states.shape[0],) + a.shape)

    def sample_observation(self, x: StateVector, rng: RngStream) -> np.ndarray:
        return self.Hm @ np.asarray(x, dtype=np.float64) + self._r_chol @ rng.normal(
            size=self.Hm.shape[0]
        )


def lingauss_step_oracle(
    model: LinearGaussianModel,
    mean: np.ndarray,
    cov: np.ndarray,
    u: Optional[np.ndarray],
    z: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """One exact predict/update Kalman step.

    The covariance update uses the Joseph form, which keeps the posterior
    covariance symmetric positive definite. A singular innovation covariance
    raises ``numpy.linalg.LinAlgError``.
    """
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    # Predict.
    mean_p = model._drift(mean, u)
    cov_p = model.F @ cov @ model.F.T + model.Q
    # Update.
    H = model.Hm
    s = H @ cov_p @ H.T + model.R
    gain = np.linalg.solve(s.T, (cov_p @ H.T).T).T
    mean_n = mean_p + gain @ (np.asarray(z, dtype=np.float64) - H @ mean_p)
    ikh = np.eye(model.state_dim) - gain @ H
    cov_n = ikh @ cov_p @ ikh.T + gain @ model.R @ gain.T
    return mean_n, 0.5 * (cov_n + cov_n.T)


def kalman_steady_state_cov(
    model: LinearGaussianModel, cov0: np.ndarray, max_iter: int = 10_000, tol: float = 1e-12
) -> np.ndarray:
    """Posterior covariance fixed point of the predict/update recursion."""
    cov = np.asarray(cov0, dtype=np.float64)
    d_z = model.Hm.shape[0]
    z0 = np.zeros(d_z)
    for _ in range(max_iter):
        _, cov_next = lingauss_step_oracle(model, np.zeros(model.state_dim), cov, None, z0)
        if np.max(np.abs(cov_next - cov)) < tol:
            return cov_next
        cov = cov_next
    return cov
