"""Scenario builders: ground-truth simulation plus model wiring.

Each scenario turns a parameter dict and a root random stream into a
:class:`Scenario`: the models the filters run against, the simulated truth,
the per-step controls and observations, and how to initialize and score each
filter. Observations are simulated once per repeat and shared verbatim by
every compared filter.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..core import ParticleSet, RngStream
from ..filters import FilterState
from ..models import (
    BeamScan,
    BeamScanModel,
    ConstantVelocityModel,
    GridMap2D,
    LinearGaussianModel,
    ModelPair,
    PlanarOdometryModel,
    PositionObservationModel,
    RandomWalkTransition,
    SineBankModel,
    load_map,
)

SCENARIO_NAMES = (
    "lingauss-verify",
    "multimodal-track",
    "sine-bank",
    "grid-localize-global",
    "grid-localize-track",
)


@dataclass
class Scenario:
    """One simulated run: truth, observations, and filter wiring."""

    name: str
    models: ModelPair
    truth: np.ndarray  # (T, d) ground-truth states, step t at row t
    controls: List[Optional[np.ndarray]]  # length T
    observations: List  # length T; None marks an occluded step
    init: Callable[[int, RngStream], FilterState]
    error_dims: Optional[Sequence[int]] = None
    error_period: Optional[np.ndarray] = None
    #: per-step observation model override (time-varying sensors)
    obs_for_step: Optional[Callable[[int], object]] = None
    extras: Dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.truth.shape[0]

    def observation_digest(self) -> str:
        """Hash of the observation sequence; equal across compared filters."""
        h = hashlib.sha256()
        for z in self.observations:
            if z is None:
                h.update(b"none")
            elif isinstance(z, BeamScan):
                h.update(z.endpoints.tobytes())
            else:
                h.update(np.asarray(z, dtype=np.float64).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Linear-Gaussian verification
# ---------------------------------------------------------------------------


def _rot2(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _lingauss_model(dim: int, params: Dict) -> LinearGaussianModel:
    q = params.get("process_noise", 1.0)
    r = params.get("obs_noise", 0.05)
    if dim == 1:
        return LinearGaussianModel(F=[[1.0]], Q=[[q]], Hm=[[1.0]], R=[[r]])
    if dim == 4:
        if params.get("structure") == "cv":
            # planar constant velocity with position-only observations
            f = np.eye(4)
            f[0, 2] = f[1, 3] = 1.0
            qm = np.diag([1e-6, 1e-6, q, q])
            hm = np.zeros((2, 4))
            hm[0, 0] = hm[1, 1] = 1.0
            return LinearGaussianModel(F=f, Q=qm, Hm=hm, R=r * np.eye(2))
        # default: stable cross-coupled dynamics, fully observed
        f = 0.9 * np.block(
            [[_rot2(0.3), np.zeros((2, 2))], [np.zeros((2, 2)), _rot2(0.5)]]
        )
        return LinearGaussianModel(F=f, Q=q * np.eye(4), Hm=np.eye(4), R=r * np.eye(4))
    raise ValueError("lingauss-verify supports dim 1 or 4")


def build_lingauss(params: Dict, rng: RngStream) -> Scenario:
    dim = int(params.get("dim", 1))
    horizon = int(params.get("horizon", 30))
    model = _lingauss_model(dim, params)
    init_cov = np.eye(dim)
    x = rng.child("x0").multivariate_normal(np.zeros(dim), init_cov)
    truth = []
    observations = []
    for t in range(horizon):
        x = model.propagate(x, None, rng.child("truth", t))
        truth.append(x)
        observations.append(model.sample_observation(x, rng.child("obs", t)))

    def init(n: int, stream: RngStream) -> FilterState:
        draws = stream.multivariate_normal(np.zeros(dim), init_cov, size=n)
        return FilterState(particles=ParticleSet(draws))

    return Scenario(
        name="lingauss-verify",
        models=ModelPair(model, model),
        truth=np.asarray(truth),
        controls=[None] * horizon,
        observations=observations,
        init=init,
        extras={"init_cov": init_cov, "dim": dim},
    )


# ---------------------------------------------------------------------------
# Multi-modal occluded tracking
# ---------------------------------------------------------------------------


def _segment_hits_box(p0: np.ndarray, p1: np.ndarray, box) -> bool:
    """Does the segment p0->p1 intersect the axis-aligned box (slab test)?"""
    xmin, ymin, xmax, ymax = box
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for i, (lo, hi) in enumerate(((xmin, xmax), (ymin, ymax))):
        if abs(d[i]) < 1e-12:
            if p0[i] < lo or p0[i] > hi:
                return False
        else:
            ta = (lo - p0[i]) / d[i]
            tb = (hi - p0[i]) / d[i]
            ta, tb = min(ta, tb), max(ta, tb)
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 > t1:
                return False
    return True


def build_multimodal_track(params: Dict, rng: RngStream) -> Scenario:
    """A point robot tracked by a fixed scanner behind two obstacles.

    The scanner reports the robot's position when line-of-sight exists;
    while the robot passes behind an obstacle the filter receives nothing,
    and the robot changes heading mid-occlusion.
    """
    horizon = int(params.get("horizon", 40))
    accel_std = float(params.get("accel_noise", 0.05))
    obs_std = float(params.get("obs_noise", 0.25))
    scanner = np.asarray(params.get("scanner", [0.0, 0.0]), dtype=np.float64)
    obstacles = params.get(
        "obstacles", [[6.0, 2.5, 9.0, 7.0], [14.0, -7.0, 17.0, -2.5]]
    )
    turn_step = int(params.get("turn_step", horizon // 2))

    transition = ConstantVelocityModel(accel_noise_std=accel_std)
    observation = PositionObservationModel(noise_std=obs_std)

    x = np.array([2.0, 6.0, 0.7, -0.35])
    truth = []
    observations = []
    for t in range(horizon):
        x = transition.propagate(x, None, rng.child("truth", t))
        if t == turn_step:
            x = x.copy()
            x[2], x[3] = 0.55, 0.45  # heading change while (typically) occluded
        truth.append(x)
        occluded = any(_segment_hits_box(scanner, x[:2], box) for box in obstacles)
        if occluded:
            observations.append(None)
        else:
            observations.append(observation.sample_observation(x, rng.child("obs", t)))

    start = truth[0]

    def init(n: int, stream: RngStream) -> FilterState:
        cov = np.diag([1.0, 1.0, 0.25, 0.25])
        draws = stream.multivariate_normal(start, cov, size=n)
        return FilterState(particles=ParticleSet(draws))

    return Scenario(
        name="multimodal-track",
        models=ModelPair(transition, observation),
        truth=np.asarray(truth),
        controls=[None] * horizon,
        observations=observations,
        init=init,
        error_dims=(0, 1),
        extras={"obstacles": obstacles, "scanner": scanner},
    )


# ---------------------------------------------------------------------------
# Sine bank (high-dimensional tracking with few particles)
# ---------------------------------------------------------------------------


def build_sine_bank(params: Dict, rng: RngStream) -> Scenario:
    n_fns = int(params.get("n_fns", 10))
    horizon = int(params.get("horizon", 50))
    obs_std = float(params.get("obs_noise", 0.1))
    period_k = float(params.get("period", 1.0))
    walk_std = float(params.get("process_noise", 0.01))
    amp_lo, amp_hi = params.get("amp_range", (0.5, 5.0))

    dim = 2 * n_fns
    obs = SineBankModel(n_fns=n_fns, period_k=period_k, obs_noise_std=obs_std)
    transition = RandomWalkTransition(dim, walk_std)

    truth_state = np.empty(dim)
    truth_state[0::2] = rng.child("amp").uniform(amp_lo, amp_hi, size=n_fns)
    truth_state[1::2] = rng.child("phase").uniform(0.0, 2 * np.pi / period_k, size=n_fns)

    truth = []
    observations = []
    x = truth_state
    for t in range(horizon):
        x = transition.propagate(x, None, rng.child("truth", t))
        truth.append(x)
        observations.append(obs.at_time(float(t)).sample_observation(x, rng.child("obs", t)))

    def init(n: int, stream: RngStream) -> FilterState:
        draws = np.empty((n, dim))
        draws[:, 0::2] = stream.child("amp").uniform(amp_lo, amp_hi, size=(n, n_fns))
        draws[:, 1::2] = stream.child("phase").uniform(
            0.0, 2 * np.pi / period_k, size=(n, n_fns)
        )
        return FilterState(particles=ParticleSet(draws))

    period = np.zeros(dim)
    period[1::2] = 2 * np.pi / period_k  # phases compared on the circle

    return Scenario(
        name="sine-bank",
        models=ModelPair(transition, obs),
        truth=np.asarray(truth),
        controls=[None] * horizon,
        observations=observations,
        init=init,
        error_period=period,
        obs_for_step=lambda t: obs.at_time(float(t)),
        extras={"n_fns": n_fns},
    )


# ---------------------------------------------------------------------------
# Grid-map localization
# ---------------------------------------------------------------------------


def two_room_map(size: int = 64, resolution: float = 1.0) -> GridMap2D:
    """Synthetic map: two rooms joined by a corridor, distinct furnishings."""
    occ = np.zeros((size, size), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    mid = size // 2
    occ[:, mid] = True
    gap = slice(mid - 4, mid + 4)
    occ[gap, mid] = False
    # room A: square pillar; room B: long bench along the far wall
    occ[12:18, 12:18] = True
    occ[int(size * 0.7) : int(size * 0.7) + 2, mid + 8 : size - 8] = True
    return GridMap2D(occ, resolution)


def raycast(grid: GridMap2D, origin: np.ndarray, angles: np.ndarray, max_range: float = 40.0):
    """March each ray to the first occupied cell; None marks no hit.

    Simulation-side helper for generating synthetic scans; the observation
    model itself never casts rays.
    """
    step = 0.25 * grid.resolution
    out = []
    for a in np.atleast_1d(angles):
        direction = np.array([np.cos(a), np.sin(a)])
        r = step
        hit = None
        while r <= max_range:
            p = origin + r * direction
            u = p / grid.resolution - 0.5
            j, i = int(round(u[0])), int(round(u[1]))
            if i < 0 or i >= grid.height or j < 0 or j >= grid.width:
                break
            if grid.occupancy[i, j]:
                hit = r
                break
            r += step
        out.append(hit)
    return out


def simulate_scan(
    grid: GridMap2D,
    pose: np.ndarray,
    n_beams: int,
    noise_std: float,
    rng: RngStream,
    max_range: float = 40.0,
) -> Optional[BeamScan]:
    """Noisy sensor-frame endpoints for beams that hit within range."""
    angles = np.linspace(-np.pi, np.pi, n_beams, endpoint=False)
    ranges = raycast(grid, pose[:2], angles + pose[2], max_range)
    noise = rng.normal(size=n_beams) * noise_std
    endpoints = []
    for a, r, n in zip(angles, ranges, noise):
        if r is None:
            continue
        endpoints.append([(r + n) * np.cos(a), (r + n) * np.sin(a)])
    if not endpoints:
        return None
    return BeamScan(np.asarray(endpoints), noise_std)


def _drive_square(t: int, horizon: int, leg: float) -> np.ndarray:
    """Body-frame controls tracing a rounded square inside room A."""
    quarter = max(horizon // 4, 1)
    if t % quarter == quarter - 1:
        return np.array([leg, 0.0, np.pi / 2])
    return np.array([leg, 0.0, 0.0])


def build_grid_localize(params: Dict, rng: RngStream, tracking: bool) -> Scenario:
    grid = load_map(params["map_file"]) if "map_file" in params else two_room_map(
        int(params.get("map_size", 64)), float(params.get("resolution", 1.0))
    )
    horizon = int(params.get("horizon", 30))
    n_beams = int(params.get("n_beams", 24))
    beam_noise = float(params.get("beam_noise", 0.15))
    trans_noise = float(params.get("trans_noise", 0.08))
    rot_noise = float(params.get("rot_noise", 0.02))
    leg = float(params.get("step_length", 1.2))

    transition = PlanarOdometryModel(trans_noise, rot_noise)
    observation = BeamScanModel(grid)

    extent = grid.extent[0]
    start = np.asarray(
        params.get("start_pose", [extent * 0.2, extent * 0.2, 0.0]), dtype=np.float64
    )

    x = start.copy()
    truth = []
    controls = []
    observations = []
    for t in range(horizon):
        u = _drive_square(t, horizon, leg)
        x = transition.propagate(x, u, rng.child("truth", t))
        truth.append(x)
        controls.append(u)
        observations.append(
            simulate_scan(grid, x, n_beams, beam_noise, rng.child("scan", t))
        )

    if tracking:

        def init(n: int, stream: RngStream) -> FilterState:
            cov = np.diag([0.5**2, 0.5**2, 0.1**2])
            draws = stream.multivariate_normal(start, cov, size=n)
            return FilterState(particles=ParticleSet(draws))

    else:

        def init(n: int, stream: RngStream) -> FilterState:
            from ..filters import init_uniform_poses

            return init_uniform_poses(grid, n, stream)

    return Scenario(
        name="grid-localize-track" if tracking else "grid-localize-global",
        models=ModelPair(transition, observation),
        truth=np.asarray(truth),
        controls=controls,
        observations=observations,
        init=init,
        error_dims=(0, 1),
        extras={"grid": grid, "n_beams": n_beams},
    )


_BUILDERS = {
    "lingauss-verify": lambda p, r: build_lingauss(p, r),
    "multimodal-track": lambda p, r: build_multimodal_track(p, r),
    "sine-bank": lambda p, r: build_sine_bank(p, r),
    "grid-localize-global": lambda p, r: build_grid_localize(p, r, tracking=False),
    "grid-localize-track": lambda p, r: build_grid_localize(p, r, tracking=True),
}


def build_scenario(name: str, params: Dict, rng: RngStream) -> Scenario:
    if name not in _BUILDERS:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
    return _BUILDERS[name](params, rng)
