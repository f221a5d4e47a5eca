"""Command-line property suites: fast, seeded re-runs of core invariants.

These mirror the key test-suite properties so a deployment can sanity-check
an installation without pytest. Each check returns its observed value and
bound; the CLI turns failures into exit code 3.
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np

from ..core import ParticleSet, RngStream, particle_mean_cov
from ..filters import FilterConfig, low_variance_resample, spf_step, FilterState
from ..kernels import IsotropicRbf, gram_and_grads, median_heuristic
from ..models import (
    GridMap2D,
    BeamScan,
    BeamScanModel,
    LinearGaussianModel,
    ModelPair,
    SineBankModel,
    kalman_steady_state_cov,
    lingauss_step_oracle,
)
from ..steinflow import GaussianTarget, phi_hat, target_score_batch

SUITES = ("gradients", "stein", "resampling", "oracle")


def _check(name: str, passed: bool, detail: str) -> Dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _fd_score(loglik, x, step=1e-5):
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (loglik(x + e) - loglik(x - e)) / (2 * step)
    return grad


def suite_gradients() -> List[Dict]:
    results = []
    rng = np.random.default_rng(1234)

    sine = SineBankModel(n_fns=3, obs_noise_std=0.3, t=1.3)
    worst = 0.0
    for _ in range(100):
        x = np.empty(6)
        x[0::2] = rng.uniform(0.5, 5.0, 3)
        x[1::2] = rng.uniform(0.0, 2 * np.pi, 3)
        z = rng.normal(size=3)
        fd = _fd_score(lambda v: sine.log_likelihood(v, z), x)
        err = np.abs(sine.score(x, z) - fd)
        denom = np.maximum(np.abs(fd), 1e-6)
        worst = max(worst, float((err / denom).max()))
    results.append(_check("sine score vs finite differences", worst <= 1e-5, f"max rel err {worst:.2e} (bound 1e-5)"))

    model = LinearGaussianModel(F=np.eye(2), Q=np.eye(2), Hm=np.eye(2), R=0.3 * np.eye(2))
    worst = 0.0
    for _ in range(100):
        x = rng.normal(size=2)
        z = rng.normal(size=2)
        fd = _fd_score(lambda v: model.log_likelihood(v, z), x)
        err = np.abs(model.score(x, z) - fd)
        worst = max(worst, float((err / np.maximum(np.abs(fd), 1e-6)).max()))
    results.append(_check("gaussian score vs finite differences", worst <= 1e-5, f"max rel err {worst:.2e} (bound 1e-5)"))

    occ = np.zeros((30, 30), dtype=bool)
    occ[10:20, 14] = True
    occ[24, 5:25] = True
    grid = GridMap2D(occ, 1.0)
    beam_model = BeamScanModel(grid)
    scan = BeamScan(rng.uniform(-3, 3, size=(5, 2)), 0.5)
    from ..models.gridmap import _transform_endpoints

    worst = 0.0
    checked = 0
    while checked < 100:
        pose = np.array([rng.uniform(6, 24), rng.uniform(6, 22), rng.uniform(-np.pi, np.pi)])
        pts, _ = _transform_endpoints(pose[None, :], scan.endpoints)
        frac = np.abs((pts - 0.5) - np.round(pts - 0.5))
        if frac.min() < 0.05 or grid.distance(pts[0]).min() < 0.5:
            continue
        fd = _fd_score(lambda v: beam_model.log_likelihood(v, scan), pose)
        err = np.abs(beam_model.score(pose, scan) - fd)
        worst = max(worst, float((err / np.maximum(np.abs(fd), 1e-4)).max()))
        checked += 1
    results.append(_check("beam score vs finite differences", worst <= 1e-3, f"max rel err {worst:.2e} (bound 1e-3)"))
    return results


def suite_stein() -> List[Dict]:
    target = GaussianTarget([0.0, 0.0], np.eye(2))
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        p = ParticleSet(rng.normal(size=(1000, 2)))
        ps = target_score_batch(p, target)
        g = gram_and_grads(p, IsotropicRbf(median_heuristic(p)))
        phi = phi_hat(p, ps, g)
        worst = max(worst, float(np.linalg.norm(phi.mean(axis=0))))
    return [
        _check(
            "mean transport direction on target samples",
            worst <= 0.1,
            f"max |mean phi| {worst:.4f} over 5 seeds (bound 0.1)",
        )
    ]


def suite_resampling() -> List[Dict]:
    results = []
    weights = np.array([0.5, 0.3, 0.2])
    n_out = 10
    trials = 100_000
    rng = RngStream(2024).child("resampling")
    counts = np.zeros(3)
    for _ in range(trials):
        idx = low_variance_resample(weights, rng, n_out)
        counts += np.bincount(idx, minlength=3)
    mean_counts = counts / trials
    expected = n_out * weights
    rel = np.abs(mean_counts - expected) / expected
    results.append(
        _check(
            "systematic resampling expected counts",
            bool(rel.max() <= 0.01),
            f"mean counts {np.round(mean_counts, 3).tolist()} vs {expected.tolist()} (1% bound)",
        )
    )
    uniform = np.full(64, 1.0 / 64)
    ok = True
    for k in range(50):
        idx = low_variance_resample(uniform, RngStream(k).child("u"))
        ok = ok and np.array_equal(np.sort(idx), np.arange(64))
    results.append(_check("uniform weights resample to identity", ok, "each index exactly once over 50 draws"))
    return results


def suite_oracle() -> List[Dict]:
    model = LinearGaussianModel(F=[[1.0]], Q=[[0.1]], Hm=[[1.0]], R=[[0.5]])
    p_inf = kalman_steady_state_cov(model, np.eye(1))[0, 0]
    rng = RngStream(77)
    x = np.zeros(1)
    truth, obs = [], []
    for t in range(30):
        x = model.propagate(x, None, rng.child("truth", t))
        truth.append(x)
        obs.append(model.sample_observation(x, rng.child("obs", t)))
    cfg = FilterConfig(n_particles=100, step_size=0.2, n_iterations=30, seed=11)
    state = FilterState(particles=ParticleSet(rng.child("init").normal(size=(100, 1))))
    mean, cov = np.zeros(1), np.eye(1)
    gaps = []
    models = ModelPair(model, model)
    for t in range(30):
        state = spf_step(state, None, obs[t], models, cfg)
        mean, cov = lingauss_step_oracle(model, mean, cov, None, obs[t])
        est, _ = particle_mean_cov(state.particles)
        gaps.append(float(est[0] - mean[0]))
    gap_rmse = float(np.sqrt(np.mean(np.square(gaps))))
    bound = 0.1 * np.sqrt(p_inf)
    return [
        _check(
            "stein flow tracks the exact linear-Gaussian posterior",
            gap_rmse <= bound,
            f"gap RMSE {gap_rmse:.4f} vs bound {bound:.4f}",
        )
    ]


def run_suite(name: str) -> List[Dict]:
    table = {
        "gradients": suite_gradients,
        "stein": suite_stein,
        "resampling": suite_resampling,
        "oracle": suite_oracle,
    }
    if name not in table:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    return table[name]()
