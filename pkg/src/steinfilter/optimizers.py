"""Step-direction engines for the particle flow.

The quasi-Newton path never materializes an inverse Hessian: the two-loop
recursion applies it from a short ring buffer of displacement/gradient
difference pairs, at O(m d) per particle. Pairs are stored in the descent
convention (``y`` is the change of the *negative* ascent direction), so the
curvature condition ``y^T s > 0`` holds near modes of a concave log-density
and the implied preconditioner stays positive definite.
"""

from __future__ import annotations

from collections import deque
from typing import Deque, Optional, Tuple

import numpy as np

#: Minimum y^T s for a curvature pair to be accepted.
CURVATURE_TOL = 1e-10
#: Additionally require y^T s > REL_CURVATURE_TOL * |y| |s| (a minimum angle
#: between displacement and gradient change). Nearly orthogonal pairs pass
#: the absolute guard with a tiny positive product, and the resulting huge
#: rho would blow the preconditioner up.
REL_CURVATURE_TOL = 1e-2


def _pair_ok(ys: float, s_norm: float, y_norm: float) -> bool:
    return np.isfinite(ys) and ys > max(CURVATURE_TOL, REL_CURVATURE_TOL * s_norm * y_norm)


class LbfgsHistory:
    """Ring buffer of curvature pairs defining an inverse-Hessian action."""

    def __init__(self, capacity: int = 10):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._s: Deque[np.ndarray] = deque(maxlen=capacity)
        self._y: Deque[np.ndarray] = deque(maxlen=capacity)
        self._rho: Deque[float] = deque(maxlen=capacity)
        self.rejected = 0

    def __len__(self) -> int:
        return len(self._s)

    def reset(self) -> None:
        self._s.clear()
        self._y.clear()
        self._rho.clear()

    def insert(self, s: np.ndarray, y: np.ndarray) -> bool:
        """Store a pair if it satisfies the curvature condition.

        Rejected pairs (flat or negative curvature) leave the history
        unchanged and bump :attr:`rejected`; that is bookkeeping, not an
        error.
        """
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        ys = float(y @ s)
        if not _pair_ok(ys, float(np.linalg.norm(s)), float(np.linalg.norm(y))):
            self.rejected += 1
            return False
        self._s.append(s)
        self._y.append(y)
        self._rho.append(1.0 / ys)
        return True

    def direction(self, g: np.ndarray, h0_diag: Optional[np.ndarray] = None) -> np.ndarray:
        """Apply the implied inverse Hessian: returns ``H @ g``.

        With an empty history the seed matters: ``h0_diag`` (a diagonal
        inverse-Hessian approximation, e.g. from Gauss-Newton curvature)
        keeps the very first steps on a stiff objective sane; without it the
        identity is used. Once pairs exist the standard two-loop recursion
        runs with ``H0 = gamma I``, ``gamma = (s^T y)/(y^T y)`` of the newest
        pair. ``H`` is positive definite by construction, so the output
        keeps a positive inner product with ``g``.
        """
        q = np.array(g, dtype=np.float64, copy=True)
        if not self._s:
            return q if h0_diag is None else h0_diag * q
        k = len(self._s)
        alphas = np.empty(k)
        for i in range(k - 1, -1, -1):
            alphas[i] = self._rho[i] * float(self._s[i] @ q)
            q -= alphas[i] * self._y[i]
        gamma = 1.0 / (self._rho[-1] * float(self._y[-1] @ self._y[-1]))
        r = gamma * q
        for i in range(k):
            beta = self._rho[i] * float(self._y[i] @ r)
            r += (alphas[i] - beta) * self._s[i]
        return r


def lbfgs_insert(hist: LbfgsHistory, s: np.ndarray, y: np.ndarray) -> LbfgsHistory:
    hist.insert(s, y)
    return hist


def lbfgs_direction(hist: LbfgsHistory, g: np.ndarray) -> np.ndarray:
    return hist.direction(g)


class BatchedLbfgs:
    """Independent L-BFGS histories for N particles, updated in lockstep.

    Behaves exactly like one :class:`LbfgsHistory` per particle: a rejected
    pair is dropped for that particle only and never consumes its ring
    capacity. Slots are age-ordered (0 = newest) with per-particle validity,
    and the two-loop recursion runs vectorized across the batch.
    """

    def __init__(self, n: int, dim: int, capacity: int = 10):
        self.n = int(n)
        self.dim = int(dim)
        self.capacity = int(capacity)
        m = self.capacity
        self._s = np.zeros((m, n, dim))
        self._y = np.zeros((m, n, dim))
        self._rho = np.zeros((m, n))
        self._gamma = np.zeros((m, n))
        self._valid = np.zeros((m, n), dtype=bool)
        self.rejected = 0

    def insert(self, s: np.ndarray, y: np.ndarray) -> None:
        ys = np.einsum("nd,nd->n", y, s)
        floor = np.maximum(
            CURVATURE_TOL,
            REL_CURVATURE_TOL * np.linalg.norm(s, axis=1) * np.linalg.norm(y, axis=1),
        )
        accept = np.isfinite(ys) & (ys > floor)
        self.rejected += int((~accept).sum())
        if not accept.any():
            return
        yy = np.einsum("nd,nd->n", y, y)
        # Shift accepted particles' histories one age older; others untouched.
        a = accept
        self._s[1:, a] = self._s[:-1, a]
        self._y[1:, a] = self._y[:-1, a]
        self._rho[1:, a] = self._rho[:-1, a]
        self._gamma[1:, a] = self._gamma[:-1, a]
        self._valid[1:, a] = self._valid[:-1, a]
        self._s[0, a] = s[a]
        self._y[0, a] = y[a]
        self._rho[0, a] = 1.0 / ys[a]
        self._gamma[0, a] = ys[a] / yy[a]
        self._valid[0, a] = True

    def direction(self, g: np.ndarray, h0_diag: Optional[np.ndarray] = None) -> np.ndarray:
        q = np.array(g, dtype=np.float64, copy=True)
        m = self.capacity
        if not self._valid.any():
            return q if h0_diag is None else h0_diag * q
        alphas = np.zeros((m, self.n))
        for k in range(m):  # age 0 = newest, so ascending k walks newest-to-oldest
            a = self._valid[k] * self._rho[k] * np.einsum("nd,nd->n", self._s[k], q)
            alphas[k] = a
            q -= a[:, None] * self._y[k]
        has_pairs = self._valid[0]  # age ordering: slot 0 is newest where any exist
        gamma = self._gamma[0]
        if h0_diag is None:
            r = np.where(has_pairs[:, None], gamma[:, None], 1.0) * q
        else:
            r = np.where(has_pairs[:, None], gamma[:, None] * q, h0_diag * q)
        for k in range(m - 1, -1, -1):
            b = self._valid[k] * self._rho[k] * np.einsum("nd,nd->n", self._y[k], r)
            r += (alphas[k] - b)[:, None] * self._s[k]
        return r


class AdamState:
    """Adam moments; steps follow the ascent direction of ``g``.

    ``dim`` may be a shape tuple, so one state can serve a whole particle
    batch with elementwise updates.
    """

    def __init__(self, dim, lr: float = 0.1, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state: AdamState, g: np.ndarray) -> Tuple[np.ndarray, AdamState]:
    return state.step(g), state
