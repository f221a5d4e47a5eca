"""Filter recursions: Stein particle flow, bootstrap particle filter, helpers.

The Stein filter alternates a stochastic prediction with a deterministic
inner flow: predicted particles are transported for ``L`` iterations along
the kernelized steepest direction of the log-posterior, each particle's step
preconditioned by its own limited-memory quasi-Newton history. No weights,
no resampling: the posterior set is a continuous deformation of the
predicted set, which preserves diversity by construction.

The bootstrap baseline is the classic propagate / weight / low-variance
resample loop. Both filters consume the same model interfaces and the same
counted random streams, so runs are reproducible bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats

from .core import ParticleSet, RngStream
from .kernels import IsotropicRbf, ScaledRbf, gram_and_grads, median_heuristic, metric_from_curvature
from .models.base import ModelPair, ObservationModel, TransitionModel
from .models.gridmap import BeamScanModel
from .optimizers import AdamState, BatchedLbfgs, LbfgsHistory
from .steinflow import (
    FilterPosterior,
    GaussianTarget,
    KdePriorApprox,
    PosteriorScore,
    phi_hat,
    target_score_batch,
)

KERNEL_CHOICES = ("isotropic-median", "hessian-scaled")
OPTIMIZER_CHOICES = ("lbfgs", "adam", "sgd")
PRIOR_CHOICES = ("gaussian", "kde")


@dataclass(frozen=True)
class FilterConfig:
    """Knobs of one filter instance.

    ``step_size`` and ``n_iterations`` control the inner flow; the kernel
    picks between the median-bandwidth isotropic RBF (recomputed every
    iteration) and the curvature-scaled anisotropic RBF (metric fixed per
    update step from the predicted particles). SVGD-with-Adam is a
    configuration, not a separate filter: ``kernel="isotropic-median",
    optimizer="adam"``.
    """

    n_particles: int
    step_size: float = 0.05
    n_iterations: int = 25
    kernel: str = "isotropic-median"
    optimizer: str = "lbfgs"
    lbfgs_memory: int = 10
    adam_lr: float = 0.1
    prior: str = "gaussian"
    seed: int = 0
    curvature_pairs: str = "phi"  # difference full directions, or "score"
    step_clamp: Optional[float] = 1.0  # max step, in cloud RMS radii; None disables
    reproject: bool = False
    reproject_threshold: Optional[float] = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        # step_size 0 is allowed as the degenerate "prediction only" flow.
        if self.step_size < 0:
            raise ValueError("step_size must be nonnegative")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.kernel not in KERNEL_CHOICES:
            raise ValueError(f"kernel must be one of {KERNEL_CHOICES}")
        if self.optimizer not in OPTIMIZER_CHOICES:
            raise ValueError(f"optimizer must be one of {OPTIMIZER_CHOICES}")
        if self.prior not in PRIOR_CHOICES:
            raise ValueError(f"prior must be one of {PRIOR_CHOICES}")
        if self.curvature_pairs not in ("phi", "score"):
            raise ValueError("curvature_pairs must be 'phi' or 'score'")

    @classmethod
    def from_dict(cls, data: Dict) -> "FilterConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown filter config keys: {sorted(extra)}")
        return cls(**data)


@dataclass
class FilterState:
    """Belief carried between steps, plus per-step diagnostics."""

    particles: ParticleSet
    t: int = 0
    log_liks: Optional[np.ndarray] = None
    leader_assignment: Optional[np.ndarray] = None
    diagnostics: Dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.particles.n

    @property
    def dim(self) -> int:
        return self.particles.dim


# ---------------------------------------------------------------------------
# Stein particle filter
# ---------------------------------------------------------------------------


def spf_predict(
    state: FilterState, u, transition: TransitionModel, rng: RngStream
) -> FilterState:
    """Propagate every particle through the transition with one noise draw.

    Any weights on the incoming set are discarded: the flow representation
    is equal-weight by construction.
    """
    t = state.t + 1
    new_states = transition.propagate_many(state.particles.states, u, rng.child("predict", t))
    return FilterState(
        particles=ParticleSet(new_states),
        t=t,
        leader_assignment=state.leader_assignment,
        diagnostics=dict(state.diagnostics),
    )


def _make_optimizers(cfg: FilterConfig, n: int, dim: int):
    if cfg.optimizer == "lbfgs":
        return BatchedLbfgs(n, dim, cfg.lbfgs_memory)
    if cfg.optimizer == "adam":
        return AdamState((n, dim), lr=cfg.adam_lr)
    return None


def stein_transport(
    particles: ParticleSet,
    target,
    cfg: FilterConfig,
    score_hook: Optional[Callable[[np.ndarray, PosteriorScore], PosteriorScore]] = None,
    record_log_density: Optional[List[float]] = None,
):
    """Run the inner flow of the update step on an arbitrary target.

    Scores and Gram matrices are evaluated at the iteration's start
    positions and all particles move simultaneously, so the result is
    independent of particle ordering. Returns the transported states and a
    diagnostics dict.
    """
    x = particles.states.copy()
    n, dim = x.shape
    optimizers = _make_optimizers(cfg, n, dim)

    metric = None
    inv_diag = None
    if getattr(target, "has_curvature", False):
        curv = target.curvature_many(x)
        if cfg.kernel == "hessian-scaled":
            metric = metric_from_curvature(curv)
        if cfg.optimizer == "lbfgs":
            # Diagonal inverse-curvature seed for histories without pairs;
            # keeps the first quasi-Newton steps bounded on stiff targets.
            diag = np.einsum("njj->nj", curv)
            floor = 1e-6 * diag.max() + 1e-12
            inv_diag = 1.0 / np.maximum(diag, floor)

    prev_x = None
    prev_g = None
    mean_phi_norm = 0.0
    for l in range(cfg.n_iterations):
        pset = ParticleSet(x)
        try:
            ps = target_score_batch(pset, target)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} at iteration {l}") from None
        if score_hook is not None:
            ps = score_hook(x, ps)
        if record_log_density is not None:
            record_log_density.append(float(ps.log_densities.mean()))

        if metric is not None:
            spec = ScaledRbf(metric)
        elif n >= 2:
            spec = IsotropicRbf(median_heuristic(pset))
        else:
            spec = IsotropicRbf(1.0)
        gram = gram_and_grads(pset, spec)
        phi = phi_hat(pset, ps, gram)

        pair_basis = phi if cfg.curvature_pairs == "phi" else ps.scores
        if cfg.optimizer == "lbfgs" and prev_x is not None:
            optimizers.insert(x - prev_x, -(pair_basis - prev_g))

        if cfg.optimizer == "lbfgs":
            h0_diag = None
            if inv_diag is not None:
                # The seed must precondition the transport field, not the raw
                # log-density: the kernel average attenuates scores by the
                # per-particle kernel mass, so scale the inverse curvature up
                # by the same factor.
                kappa = gram.values.mean(axis=0)
                h0_diag = inv_diag / kappa[:, None]
            step = cfg.step_size * optimizers.direction(phi, h0_diag)
        elif cfg.optimizer == "adam":
            step = optimizers.step(phi)
        else:
            step = cfg.step_size * phi

        if cfg.step_clamp is not None and n >= 2:
            # Trust guard: no particle moves farther than step_clamp cloud
            # RMS radii in one iteration.
            spread = float(np.sqrt(np.mean(np.sum((x - x.mean(axis=0)) ** 2, axis=1))))
            tau = cfg.step_clamp * max(spread, 1e-12)
            norms = np.linalg.norm(step, axis=1)
            step = step * np.minimum(1.0, tau / np.maximum(norms, 1e-300))[:, None]

        prev_x = x
        prev_g = pair_basis
        x = x + step
        bad = ~np.all(np.isfinite(x), axis=1)
        if np.any(bad):
            j = int(np.nonzero(bad)[0][0])
            raise FloatingPointError(
                f"particle {j} became non-finite at iteration {l}"
            )
        mean_phi_norm = float(np.linalg.norm(phi, axis=1).mean())

    diag = {"mean_phi_norm": mean_phi_norm}
    if cfg.optimizer == "lbfgs":
        diag["curvature_rejections"] = int(optimizers.rejected)
    return x, diag


def _build_prior(cfg: FilterConfig, predicted: ParticleSet):
    if cfg.prior == "kde":
        return KdePriorApprox(predicted)
    return GaussianTarget.fit(predicted)


def reproject_threshold(cfg: FilterConfig, n_beams: int) -> float:
    """Log-likelihood slack below the best particle that triggers guidance.

    Half the 99% chi-square quantile on the beam count: particles whose fit
    is statistically incompatible with the best hypothesis at that level get
    their gradients re-anchored.
    """
    if cfg.reproject_threshold is not None:
        return float(cfg.reproject_threshold)
    return 0.5 * float(stats.chi2.ppf(0.99, max(n_beams, 1)))


def _assign_leader(log_liks: np.ndarray, threshold: float) -> np.ndarray:
    leader = int(np.argmax(log_liks))
    assignment = np.full(log_liks.shape[0], -1, dtype=int)
    assignment[log_liks < log_liks[leader] - threshold] = leader
    return assignment


def reproject_to_leader(
    state: FilterState, obs_model: ObservationModel, z, threshold: Optional[float] = None
) -> FilterState:
    """Mark poorly fitting particles for leader-guided gradients.

    Particle positions are untouched; the returned state carries an
    assignment consumed by the next update, where flagged particles evaluate
    their observation gradient with correspondences borrowed from the best
    particle. With every particle within the threshold the assignment is
    empty and the state is unchanged in effect.
    """
    log_liks = (
        state.log_liks
        if state.log_liks is not None
        else obs_model.log_likelihood_many(state.particles.states, z)
    )
    if threshold is None:
        n_beams = z.n_beams if hasattr(z, "n_beams") else len(np.atleast_1d(z))
        threshold = 0.5 * float(stats.chi2.ppf(0.99, max(n_beams, 1)))
    assignment = _assign_leader(np.asarray(log_liks, dtype=np.float64), threshold)
    return replace(state, leader_assignment=assignment, log_liks=np.asarray(log_liks))


def spf_update(state: FilterState, z, obs_model: ObservationModel, cfg: FilterConfig) -> FilterState:
    """Transport the predicted particles onto the current posterior.

    The prior density is fitted once to the predicted set and held fixed
    through the inner iterations. With re-projection enabled (and a sensor
    that supports reference correspondences) the leader assignment refreshes
    every iteration from the current observation fit.
    """
    predicted = state.particles
    prior = _build_prior(cfg, predicted)
    target = FilterPosterior(obs_model, z, prior)

    hook = None
    supports_reference = isinstance(obs_model, BeamScanModel)
    if supports_reference and (cfg.reproject or state.leader_assignment is not None):
        threshold = reproject_threshold(cfg, z.n_beams)
        refresh = cfg.reproject
        initial_assignment = state.leader_assignment

        def hook(x: np.ndarray, ps: PosteriorScore) -> PosteriorScore:
            ll_obs = obs_model.log_likelihood_many(x, z)
            if refresh or initial_assignment is None:
                assignment = _assign_leader(ll_obs, threshold)
            else:
                assignment = initial_assignment
            flagged = np.nonzero(assignment >= 0)[0]
            if flagged.size == 0:
                return ps
            scores = ps.scores.copy()
            logd = ps.log_densities.copy()
            prior_scores = prior.score_many(x[flagged])
            prior_logd = prior.log_density_many(x[flagged])
            for leader in np.unique(assignment[flagged]):
                rows = flagged[assignment[flagged] == leader]
                ev = obs_model.evaluate(x[rows], z, reference_pose=x[leader])
                sel = np.searchsorted(flagged, rows)
                scores[rows] = ev.score + prior_scores[sel]
                logd[rows] = ev.log_likelihood + prior_logd[sel]
            return PosteriorScore(scores=scores, log_densities=logd)

    new_states, diag = stein_transport(predicted, target, cfg, score_hook=hook)
    out = ParticleSet(new_states)
    diagnostics = dict(state.diagnostics)
    diagnostics.update(diag)
    if supports_reference:
        diagnostics["beams_outside"] = obs_model.evaluate(new_states, z).n_outside
    return FilterState(
        particles=out,
        t=state.t,
        log_liks=obs_model.log_likelihood_many(new_states, z),
        leader_assignment=None,
        diagnostics=diagnostics,
    )


def spf_step(state: FilterState, u, z, models: ModelPair, cfg: FilterConfig) -> FilterState:
    """One full filter step: predict, then flow onto the new posterior.

    Optimizer histories never survive across steps; curvature gathered
    before the transition jump is stale. ``z=None`` marks an occluded step:
    prediction only.
    """
    rng = RngStream(cfg.seed)
    predicted = spf_predict(state, u, models.transition, rng)
    if z is None:
        return predicted
    return spf_update(predicted, z, models.observation, cfg)


# ---------------------------------------------------------------------------
# Bootstrap particle filter
# ---------------------------------------------------------------------------


def systematic_indices(weights: np.ndarray, u0: float, n_out: Optional[int] = None) -> np.ndarray:
    """Deterministic core of systematic resampling for a given offset ``u0``."""
    w = np.asarray(weights, dtype=np.float64)
    n = w.shape[0] if n_out is None else int(n_out)
    positions = u0 + np.arange(n) / n
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0
    return np.minimum(np.searchsorted(cumulative, positions, side="right"), w.shape[0] - 1)


def low_variance_resample(
    weights: np.ndarray, rng: RngStream, n_out: Optional[int] = None
) -> np.ndarray:
    """Systematic resampling with a single stratified uniform draw.

    Index ``j`` appears floor or ceil of its expected count ``n * w_j``
    times; uniform weights reproduce every index exactly once.
    """
    n = len(weights) if n_out is None else int(n_out)
    u0 = float(rng.uniform(0.0, 1.0 / n))
    return systematic_indices(weights, u0, n)


def pf_step(
    state: FilterState,
    u,
    z,
    models: ModelPair,
    rng: RngStream,
    resample: bool = True,
) -> FilterState:
    """Bootstrap update: propagate, weight by likelihood, resample.

    A fully underflowed weight vector resets to uniform (counted in the
    diagnostics) instead of aborting, so long benchmark sweeps keep running.
    With ``resample=False`` weights accumulate multiplicatively and stay on
    the returned set (sequential importance sampling).
    """
    t = state.t + 1
    prop = models.transition.propagate_many(state.particles.states, u, rng.child("pf-propagate", t))
    diagnostics = dict(state.diagnostics)
    if z is None:
        return FilterState(
            particles=ParticleSet(prop, state.particles.weights), t=t, diagnostics=diagnostics
        )

    log_w = models.observation.log_likelihood_many(prop, z)
    if state.particles.weights is not None:
        with np.errstate(divide="ignore"):
            log_w = log_w + np.log(state.particles.weights)

    finite = np.isfinite(log_w)
    resets = diagnostics.get("weight_resets", 0)
    if not np.any(finite):
        weights = np.full(log_w.shape[0], 1.0 / log_w.shape[0])
        resets += 1
    else:
        shifted = np.where(finite, log_w - log_w[finite].max(), -np.inf)
        weights = np.exp(shifted)
        total = weights.sum()
        if total <= 0.0 or not np.isfinite(total):
            weights = np.full(log_w.shape[0], 1.0 / log_w.shape[0])
            resets += 1
        else:
            weights = weights / total
    diagnostics["weight_resets"] = resets
    diagnostics["ess"] = float(1.0 / np.sum(weights**2))

    if not resample:
        return FilterState(
            particles=ParticleSet(prop, weights), t=t, log_liks=log_w, diagnostics=diagnostics
        )
    idx = low_variance_resample(weights, rng.child("pf-resample", t))
    return FilterState(
        particles=ParticleSet(prop[idx]), t=t, log_liks=log_w[idx], diagnostics=diagnostics
    )


# ---------------------------------------------------------------------------
# Initialization and checkpoints
# ---------------------------------------------------------------------------


def init_gaussian(n: int, mean, cov, rng: RngStream) -> FilterState:
    draws = rng.multivariate_normal(np.asarray(mean, dtype=np.float64), cov, size=n)
    return FilterState(particles=ParticleSet(draws))


def init_uniform_poses(grid, n: int, rng: RngStream) -> FilterState:
    """Uniform pose hypotheses over the free cells of a grid map."""
    centers = grid.free_cell_centers()
    idx = rng.integers(0, centers.shape[0], size=n)
    jitter = rng.uniform(-0.5, 0.5, size=(n, 2)) * grid.resolution
    theta = rng.uniform(-np.pi, np.pi, size=n)
    states = np.concatenate([centers[idx] + jitter, theta[:, None]], axis=1)
    return FilterState(particles=ParticleSet(states))


def save_checkpoint(state: FilterState, cfg: FilterConfig, path) -> None:
    """JSON snapshot at a step boundary (optimizer histories reset anyway)."""
    payload = {
        "states": state.particles.states.tolist(),
        "weights": None if state.particles.weights is None else state.particles.weights.tolist(),
        "t": state.t,
        "seed": cfg.seed,
        "config": asdict(cfg),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    cfg = FilterConfig.from_dict(payload["config"])
    weights = payload["weights"]
    particles = ParticleSet(
        np.asarray(payload["states"], dtype=np.float64),
        None if weights is None else np.asarray(weights, dtype=np.float64),
    )
    return FilterState(particles=particles, t=int(payload["t"])), cfg
