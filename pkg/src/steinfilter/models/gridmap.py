"""2D occupancy grid with a differentiable distance field, and the beam sensor.

The map precomputes the Euclidean distance transform of its occupancy bitmap
(distance from every cell center to the nearest occupied cell center, in
meters) plus the index of that nearest occupied cell. Off-grid sampling uses
bilinear interpolation, which makes the field differentiable almost
everywhere and lets a beam-endpoint likelihood expose exact gradients: the
log-likelihood of a scan at pose ``x`` is ``-(1/(2 sigma^2)) sum_i D(T_x b_i)^2``
where ``T_x`` places the sensor-frame endpoint ``b_i`` into the map.

Queries outside the map clamp to the boundary and add the exterior offset,
so gradients keep pointing back into the map; such beams are counted and
reported as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from ..core import ControlInput, Observation, RngStream, StateVector
from .base import ObservationModel, TransitionModel, wrap_angle


class GridMap2D:
    """Occupancy bitmap plus precomputed distance field and its gradients."""

    def __init__(self, occupancy: np.ndarray, resolution: float):
        occ = np.asarray(occupancy, dtype=bool)
        if occ.ndim != 2:
            raise ValueError("occupancy must be a height x width bitmap")
        if not occ.any():
            raise ValueError("map must contain at least one occupied cell")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.occupancy = occ
        self.resolution = float(resolution)
        self.height, self.width = occ.shape
        dist, idx = ndimage.distance_transform_edt(
            ~occ, sampling=self.resolution, return_indices=True
        )
        self._dist = dist  # (H, W), meters, exactly 0 on occupied cells
        self._nn_idx = idx  # (2, H, W) row/col of nearest occupied cell

    # Coordinate conventions --------------------------------------------------
    # Cell (row i, col j) has its center at x = (j + 0.5) * res,
    # y = (i + 0.5) * res; row 0 is the first text row of the map file.

    def _grid_coords(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=np.float64)
        u = pts[..., 0] / self.resolution - 0.5  # fractional column
        v = pts[..., 1] / self.resolution - 0.5  # fractional row
        return u, v

    def distance_and_grad(
        self, points: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bilinear distance-field values, gradients, and outside-map flags.

        ``points`` has shape (..., 2) in meters. Outside the cell-center
        lattice the field is the clamped boundary value plus the Euclidean
        exterior offset, whose gradient points straight out of the map.
        """
        u, v = self._grid_coords(points)
        uc = np.clip(u, 0.0, self.width - 1.0)
        vc = np.clip(v, 0.0, self.height - 1.0)
        ox = (u - uc) * self.resolution
        oy = (v - vc) * self.resolution
        outside = (ox != 0.0) | (oy != 0.0)
        off = np.hypot(ox, oy)

        j0 = np.clip(np.floor(uc).astype(int), 0, max(self.width - 2, 0))
        i0 = np.clip(np.floor(vc).astype(int), 0, max(self.height - 2, 0))
        j1 = np.minimum(j0 + 1, self.width - 1)
        i1 = np.minimum(i0 + 1, self.height - 1)
        fu = uc - j0
        fv = vc - i0

        d00 = self._dist[i0, j0]
        d01 = self._dist[i0, j1]
        d10 = self._dist[i1, j0]
        d11 = self._dist[i1, j1]
        top = d00 * (1.0 - fu) + d01 * fu
        bot = d10 * (1.0 - fu) + d11 * fu
        value = top * (1.0 - fv) + bot * fv + off

        ddu = ((d01 - d00) * (1.0 - fv) + (d11 - d10) * fv) / self.resolution
        ddv = (bot - top) / self.resolution
        grad = np.empty(np.shape(u) + (2,), dtype=np.float64)
        # Clamped coordinates freeze the bilinear part; the exterior offset
        # takes over the derivative in the out-of-range component.
        safe = np.where(off > 0.0, off, 1.0)
        grad[..., 0] = np.where(u == uc, ddu, 0.0) + ox / safe
        grad[..., 1] = np.where(v == vc, ddv, 0.0) + oy / safe
        return value, grad, outside

    def distance(self, points: np.ndarray) -> np.ndarray:
        value, _, _ = self.distance_and_grad(points)
        return value

    def nearest_occupied(self, points: np.ndarray) -> np.ndarray:
        """World coordinates of the occupied cell center nearest each point."""
        u, v = self._grid_coords(points)
        j = np.clip(np.rint(u).astype(int), 0, self.width - 1)
        i = np.clip(np.rint(v).astype(int), 0, self.height - 1)
        rows = self._nn_idx[0][i, j]
        cols = self._nn_idx[1][i, j]
        out = np.empty(np.shape(u) + (2,), dtype=np.float64)
        out[..., 0] = (cols + 0.5) * self.resolution
        out[..., 1] = (rows + 0.5) * self.resolution
        return out

    def is_free(self, points: np.ndarray) -> np.ndarray:
        """Whether each point falls on a free in-bounds cell."""
        u, v = self._grid_coords(points)
        j = np.rint(u).astype(int)
        i = np.rint(v).astype(int)
        ok = (j >= 0) & (j < self.width) & (i >= 0) & (i < self.height)
        free = np.zeros_like(ok)
        free[ok] = ~self.occupancy[i[ok], j[ok]]
        return free

    def free_cell_centers(self) -> np.ndarray:
        """(M, 2) world coordinates of all free cell centers."""
        rows, cols = np.nonzero(~self.occupancy)
        return np.stack(
            [(cols + 0.5) * self.resolution, (rows + 0.5) * self.resolution], axis=1
        )

    @property
    def extent(self) -> Tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution


OCCUPIED_CHAR = "#"
FREE_CHAR = "."


def load_map(path) -> GridMap2D:
    """Read the plain-text map format.

    First line: ``width height resolution``. Then ``height`` rows of
    ``width`` characters, ``#`` occupied and ``.`` free.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("map header must be 'width height resolution'")
        width, height = int(header[0]), int(header[1])
        resolution = float(header[2])
        occ = np.zeros((height, width), dtype=bool)
        for i in range(height):
            row = fh.readline().rstrip("\n")
            if len(row) != width:
                raise ValueError(f"map row {i} has length {len(row)}, expected {width}")
            for j, ch in enumerate(row):
                if ch == OCCUPIED_CHAR:
                    occ[i, j] = True
                elif ch != FREE_CHAR:
                    raise ValueError(f"unexpected map character {ch!r} at row {i}")
    return GridMap2D(occ, resolution)


def save_map(grid: GridMap2D, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{grid.width} {grid.height} {grid.resolution}\n")
        for i in range(grid.height):
            fh.write(
                "".join(OCCUPIED_CHAR if grid.occupancy[i, j] else FREE_CHAR for j in range(grid.width))
                + "\n"
            )


@dataclass(frozen=True)
class BeamScan:
    """K beam endpoints in the sensor frame, meters, with per-beam noise std."""

    endpoints: np.ndarray  # (K, 2)
    noise_std: float

    def __post_init__(self):
        pts = np.asarray(self.endpoints, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError("endpoints must be a (K>=1, 2) array")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "endpoints", pts)

    @property
    def n_beams(self) -> int:
        return self.endpoints.shape[0]


@dataclass(frozen=True)
class BeamEval:
    """One likelihood evaluation: values, scores, and boundary diagnostics."""

    log_likelihood: np.ndarray  # (N,)
    score: np.ndarray  # (N, 3)
    n_outside: int


def _transform_endpoints(poses: np.ndarray, beams: np.ndarray):
    """Sensor-frame beams placed at each pose, plus the theta Jacobian."""
    c = np.cos(poses[:, 2])[:, None]
    s = np.sin(poses[:, 2])[:, None]
    bx = beams[None, :, 0]
    by = beams[None, :, 1]
    pts = np.empty((poses.shape[0], beams.shape[0], 2))
    pts[..., 0] = poses[:, 0:1] + c * bx - s * by
    pts[..., 1] = poses[:, 1:2] + s * bx + c * by
    dpdth = np.empty_like(pts)
    dpdth[..., 0] = -s * bx - c * by
    dpdth[..., 1] = c * bx - s * by
    return pts, dpdth


class BeamScanModel(ObservationModel):
    """Scan likelihood on a grid map for planar poses ``(px, py, theta)``.

    The per-beam residual is the distance-field value at the transformed
    endpoint; squared residuals enter a Gaussian likelihood. Scores follow
    the chain rule through the field gradient and the pose transform.
    """

    def __init__(self, grid: GridMap2D):
        self.grid = grid

    def evaluate(
        self, states: np.ndarray, z: BeamScan, reference_pose: Optional[np.ndarray] = None
    ) -> BeamEval:
        """Batched log-likelihood and score.

        With ``reference_pose`` set, each beam is paired with the occupied
        cell matched by that pose instead of by the evaluated particle: the
        resulting gradient pulls a poorly matched particle toward the
        reference state while leaving the kernel interaction free to keep it
        distinct.
        """
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        pts, dpdth = _transform_endpoints(states, z.endpoints)
        s2 = z.noise_std**2
        if reference_pose is None:
            dist, grad, outside = self.grid.distance_and_grad(pts)
            n_outside = int(outside.sum())
            ll = -0.5 * np.einsum("nk,nk->n", dist, dist) / s2
            # d loglik / d pose = -(1/s2) sum_k D_k * dD_k/dpose
            coeff = dist[..., None] * grad  # (N, K, 2)
            g_pos = -coeff.sum(axis=1) / s2
            g_th = -np.einsum("nkd,nkd->n", coeff, dpdth) / s2
        else:
            ref_pts, _ = _transform_endpoints(
                np.asarray(reference_pose, dtype=np.float64)[None, :], z.endpoints
            )
            matched = self.grid.nearest_occupied(ref_pts[0])  # (K, 2)
            _, _, outside = self.grid.distance_and_grad(pts)
            n_outside = int(outside.sum())
            resid = pts - matched[None, :, :]  # (N, K, 2)
            ll = -0.5 * np.einsum("nkd,nkd->n", resid, resid) / s2
            g_pos = -resid.sum(axis=1) / s2
            g_th = -np.einsum("nkd,nkd->n", resid, dpdth) / s2
        const = -0.5 * z.n_beams * np.log(2.0 * np.pi * s2)
        score = np.concatenate([g_pos, g_th[:, None]], axis=1)
        return BeamEval(log_likelihood=ll + const, score=score, n_outside=n_outside)

    # ObservationModel surface -------------------------------------------------

    def log_likelihood(self, x: StateVector, z: BeamScan) -> float:
        return float(self.evaluate(np.asarray(x)[None, :], z).log_likelihood[0])

    def score(self, x: StateVector, z: BeamScan) -> np.ndarray:
        return self.evaluate(np.asarray(x)[None, :], z).score[0]

    def loglik_and_score(self, x: StateVector, z: BeamScan):
        ev = self.evaluate(np.asarray(x)[None, :], z)
        return float(ev.log_likelihood[0]), ev.score[0]

    def log_likelihood_many(self, states: np.ndarray, z: BeamScan) -> np.ndarray:
        return self.evaluate(states, z).log_likelihood

    def score_many(self, states: np.ndarray, z: BeamScan) -> np.ndarray:
        return self.evaluate(states, z).score

    @property
    def has_curvature(self) -> bool:
        return True

    def curvature_many(self, states: np.ndarray, z: BeamScan) -> np.ndarray:
        # Gauss-Newton (1/s2) sum_k J_k J_k^T with J_k = d D_k / d pose.
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        pts, dpdth = _transform_endpoints(states, z.endpoints)
        _, grad, _ = self.grid.distance_and_grad(pts)
        jac = np.concatenate(
            [grad, np.einsum("nkd,nkd->nk", grad, dpdth)[..., None]], axis=2
        )  # (N, K, 3)
        return np.einsum("nki,nkj->nij", jac, jac) / z.noise_std**2

    def curvature(self, x: StateVector, z: BeamScan) -> np.ndarray:
        return self.curvature_many(np.asarray(x)[None, :], z)[0]


class PlanarOdometryModel(TransitionModel):
    """Pose propagation by a body-frame increment ``(forward, lateral, dtheta)``.

    Gaussian noise perturbs the body-frame translation and the rotation;
    the heading is wrapped to (-pi, pi] after every propagation.
    """

    def __init__(self, trans_noise_std: float, rot_noise_std: float):
        if trans_noise_std < 0 or rot_noise_std < 0:
            raise ValueError("noise stds must be nonnegative")
        self.trans_noise_std = float(trans_noise_std)
        self.rot_noise_std = float(rot_noise_std)

    @property
    def state_dim(self) -> int:
        return 3

    @property
    def process_noise_cov(self) -> np.ndarray:
        return np.diag([self.trans_noise_std**2, self.trans_noise_std**2, self.rot_noise_std**2])

    def _apply(self, states: np.ndarray, u, noise: Optional[np.ndarray]) -> np.ndarray:
        du = np.zeros(3) if u is None else np.asarray(u, dtype=np.float64)
        body = np.broadcast_to(du, states.shape[:-1] + (3,)).copy()
        if noise is not None:
            body = body + noise
        c = np.cos(states[..., 2])
        s = np.sin(states[..., 2])
        out = np.empty_like(states)
        out[..., 0] = states[..., 0] + c * body[..., 0] - s * body[..., 1]
        out[..., 1] = states[..., 1] + s * body[..., 0] + c * body[..., 1]
        out[..., 2] = wrap_angle(states[..., 2] + body[..., 2])
        return out

    def propagate_deterministic(self, x: StateVector, u: Optional[ControlInput]) -> np.ndarray:
        return self._apply(np.asarray(x, dtype=np.float64)[None, :], u, None)[0]

    def propagate(self, x: StateVector, u: Optional[ControlInput], rng: RngStream) -> np.ndarray:
        noise = self._noise(rng, (1, 3))
        return self._apply(np.asarray(x, dtype=np.float64)[None, :], u, noise)[0]

    def propagate_many(self, states: np.ndarray, u, rng: RngStream) -> np.ndarray:
        return self._apply(states, u, self._noise(rng, states.shape[:-1] + (3,)))

    def _noise(self, rng: RngStream, shape) -> np.ndarray:
        noise = rng.normal(size=shape)
        noise[..., 0] *= self.trans_noise_std
        noise[..., 1] *= self.trans_noise_std
        noise[..., 2] *= self.rot_noise_std
        return noise
