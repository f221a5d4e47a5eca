"""Shared state-space types: particle sets and deterministic random streams.

States, controls, and observations are plain 1-D float64 arrays. The two
container types defined here (:class:`ParticleSet`, :class:`RngStream`) are
value-like: particle arrays are frozen read-only, and random streams are
derived by key rather than shared, so everything in this module is safe to
hand across threads.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray

StateVector = NDArray[np.float64]
ControlInput = NDArray[np.float64]
Observation = NDArray[np.float64]

#: Relative tolerance on the sum of particle weights.
WEIGHT_TOL = 1e-12


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, raising on NaN/Inf."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ParticleSet:
    """A nonparametric belief: N state rows plus optional normalized weights.

    Equal-weight sets (the Stein-flow representation) carry ``weights=None``.
    Weighted sets (the particle-filter representation between update and
    resample) carry nonnegative weights summing to one.
    """

    states: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2:
            raise ValueError(f"states must be an N x d matrix, got shape {states.shape}")
        if states.shape[0] < 1:
            raise ValueError("a particle set needs at least one particle")
        if not np.all(np.isfinite(states)):
            raise ValueError("particle states contain non-finite entries")
        object.__setattr__(self, "states", _readonly(states))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (states.shape[0],):
                raise ValueError("weights must be a length-N vector")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and nonnegative")
            total = w.sum()
            if abs(total - 1.0) > WEIGHT_TOL * max(1.0, abs(total)):
                raise ValueError(f"weights must sum to 1, got {total!r}")
            object.__setattr__(self, "weights", _readonly(w))

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def with_states(self, states: np.ndarray) -> "ParticleSet":
        """Same-shape replacement of positions; drops any weights."""
        return ParticleSet(states)

    def with_weights(self, weights: np.ndarray) -> "ParticleSet":
        return ParticleSet(self.states, weights)


def particle_mean_cov(p: ParticleSet) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted (or uniform) mean and population covariance of a particle set.

    The covariance divides by the total weight, not N-1: the particle set is
    itself the distribution approximation, not a sample from a larger
    population. A single particle therefore has zero covariance.
    """
    x = p.states
    if p.weights is None:
        mean = x.mean(axis=0)
        centered = x - mean
        cov = centered.T @ centered / p.n
    else:
        w = p.weights
        mean = w @ x
        centered = x - mean
        cov = (centered * w[:, None]).T @ centered
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def min_pairwise_distance(p: ParticleSet) -> float:
    """Smallest Euclidean distance between any two distinct particles.

    Used as a collapse diagnostic: kernel repulsion should keep this bounded
    away from zero for a healthy Stein flow.
    """
    if p.n < 2:
        raise ValueError("min_pairwise_distance needs at least 2 particles")
    x = p.states
    if p.n <= 256:
        from scipy.spatial.distance import pdist

        return float(pdist(x).min())
    # For large sets the O(N^2) matrix is wasteful; nearest neighbor suffices.
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(x).query(x, k=2)
    return float(dist[:, 1].min())


def _purpose_key(purpose: str) -> int:
    # crc32 is stable across platforms and Python versions.
    return zlib.crc32(purpose.encode("utf-8"))


@dataclass
class RngStream:
    """Counted-stream random source.

    A stream is identified by ``(seed, path)`` where the path records the
    chain of :meth:`child` derivations (step index, purpose tag, ...).
    Identical seed and identical call sequence yield identical draws on any
    platform. Deriving a child never consumes draws from the parent, so
    adding diagnostics to one purpose can never perturb another.
    """

    seed: int
    path: Tuple[int, ...] = ()
    _gen: Optional[np.random.Generator] = field(default=None, repr=False, compare=False)

    def child(self, purpose: str, index: int = 0) -> "RngStream":
        """Derive an independent stream keyed by a purpose tag and index."""
        return RngStream(self.seed, self.path + (_purpose_key(purpose), int(index)))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self.generator.normal(loc, scale, size)

    def multivariate_normal(self, mean: np.ndarray, cov: np.ndarray, size=None) -> np.ndarray:
        # Cholesky-based draw keeps the draw count predictable (d normals per
        # sample) unlike Generator.multivariate_normal's SVD path.
        mean = np.asarray(mean, dtype=np.float64)
        d = mean.shape[0]
        try:
            chol = np.linalg.cholesky(np.asarray(cov, dtype=np.float64))
        except np.linalg.LinAlgError:
            chol = np.linalg.cholesky(np.asarray(cov) + 1e-12 * np.eye(d))
        shape = (d,) if size is None else (size, d)
        z = self.generator.normal(size=shape)
        return mean + z @ chol.T

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size)
