"""Positive definite kernels on state space and batched Gram evaluation.

Two kernel families are supported:

* isotropic squared-exponential ``k(x, x') = exp(-||x - x'||^2 / h)`` with a
  median-heuristic bandwidth rule, and
* a curvature-scaled anisotropic form
  ``k(x, x') = exp(-(1/d) (x - x')^T M (x - x'))`` whose metric ``M`` is the
  averaged local curvature of the negative log-target, deforming distances
  along directions of high variation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .core import ParticleSet

#: Smallest eigenvalue allowed in an anisotropic metric after construction.
METRIC_EIGENVALUE_FLOOR = 1e-8


@dataclass(frozen=True)
class IsotropicRbf:
    """Isotropic RBF kernel with bandwidth ``h`` (the direct denominator)."""

    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class ScaledRbf:
    """Anisotropic RBF with metric ``M`` and 1/d exponent scaling.

    The metric is symmetrized and eigenvalue-floored at construction so the
    kernel stays positive definite even when some curvature directions are
    flat.
    """

    metric: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.metric, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"metric must be square, got shape {m.shape}")
        m = _floor_eigenvalues(0.5 * (m + m.T))
        m.flags.writeable = False
        object.__setattr__(self, "metric", m)

    @property
    def dim(self) -> int:
        return self.metric.shape[0]


KernelSpec = Union[IsotropicRbf, ScaledRbf]


@dataclass(frozen=True)
class GramResult:
    """Kernel matrix and its particle-wise gradients.

    ``grad[j, l]`` holds the gradient of ``k(x^j, x^l)`` with respect to the
    first argument ``x^j``; the diagonal is identically zero for the
    translation-invariant kernels used here.
    """

    values: np.ndarray  # (N, N)
    grad: np.ndarray  # (N, N, d)


def rbf_eval(x: np.ndarray, x_other: np.ndarray, bandwidth: float) -> float:
    """Isotropic kernel value ``exp(-||x - x'||^2 / h)``."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    delta = np.asarray(x, dtype=np.float64) - np.asarray(x_other, dtype=np.float64)
    return float(np.exp(-(delta @ delta) / bandwidth))


def scaled_rbf_eval(x: np.ndarray, x_other: np.ndarray, metric: np.ndarray, dim: int) -> float:
    """Anisotropic kernel value ``exp(-(1/d) (x-x')^T M (x-x'))``."""
    delta = np.asarray(x, dtype=np.float64) - np.asarray(x_other, dtype=np.float64)
    m = np.asarray(metric, dtype=np.float64)
    return float(np.exp(-(delta @ m @ delta) / dim))


def median_heuristic(p: ParticleSet) -> float:
    """Bandwidth ``h = med^2 / ln N`` from the median pairwise distance.

    The median runs over the N(N-1)/2 distinct pairs. Coincident particle
    sets (median zero) fall back to ``h = 1``.
    """
    if p.n < 2:
        raise ValueError("median_heuristic needs at least 2 particles")
    med = float(np.median(pdist(p.states)))
    if med == 0.0:
        return 1.0
    return med * med / np.log(p.n)


def _floor_eigenvalues(m: np.ndarray) -> np.ndarray:
    eigval, eigvec = np.linalg.eigh(m)
    if eigval[0] >= METRIC_EIGENVALUE_FLOOR:
        return np.array(m, copy=True)
    eigval = np.maximum(eigval, METRIC_EIGENVALUE_FLOOR)
    return (eigvec * eigval) @ eigvec.T


def metric_from_curvature(curvatures: Sequence[np.ndarray]) -> np.ndarray:
    """Average local curvature matrices into a kernel metric.

    Inputs are expected symmetric PSD; the mean is symmetrized and its
    eigenvalues floored at 1e-8 defensively.
    """
    if len(curvatures) == 0:
        raise ValueError("metric_from_curvature needs at least one matrix")
    m = np.mean(np.asarray(curvatures, dtype=np.float64), axis=0)
    return _floor_eigenvalues(0.5 * (m + m.T))


def gram_and_grads(p: ParticleSet, spec: KernelSpec) -> GramResult:
    """Evaluate the kernel matrix and first-argument gradients for a set.

    For the isotropic kernel ``grad[j, l] = -(2/h)(x^j - x^l) K[j, l]``; for
    the scaled kernel ``grad[j, l] = -(2/d) M (x^j - x^l) K[j, l]``.
    """
    x = p.states
    diff = x[:, None, :] - x[None, :, :]  # (N, N, d), diff[j, l] = x^j - x^l
    if isinstance(spec, IsotropicRbf):
        if p.n == 1:
            sq = np.zeros((1, 1))
        else:
            sq = squareform(pdist(x, metric="sqeuclidean"))
        k = np.exp(-sq / spec.bandwidth)
        grad = (-2.0 / spec.bandwidth) * diff * k[:, :, None]
    elif isinstance(spec, ScaledRbf):
        d = spec.dim
        if x.shape[1] != d:
            raise ValueError(f"metric dimension {d} does not match state dimension {x.shape[1]}")
        mdiff = diff @ spec.metric  # (N, N, d) rows M(x^j - x^l)
        quad = np.einsum("jld,jld->jl", diff, mdiff)
        k = np.exp(-quad / d)
        grad = (-2.0 / d) * mdiff * k[:, :, None]
    else:
        raise TypeError(f"unknown kernel spec {type(spec).__name__}")
    return GramResult(values=k, grad=grad)
