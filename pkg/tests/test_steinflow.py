import numpy as np
import pytest

from steinfilter import (
    GaussianMixtureTarget,
    GaussianTarget,
    IsotropicRbf,
    KdePriorApprox,
    ParticleSet,
    gram_and_grads,
    median_heuristic,
    phi_hat,
    score_batch,
    stein_trace_diagnostic,
    target_score_batch,
)
from steinfilter.models import LinearGaussianModel


class _FlatPrior:
    """Zero-score improper prior for isolating likelihood terms."""

    has_curvature = False

    def log_density_many(self, states):
        return np.zeros(states.shape[0])

    def score_many(self, states):
        return np.zeros_like(states)


def _gaussian_obs(r=1.0):
    return LinearGaussianModel(F=[[1.0]], Q=[[1.0]], Hm=[[1.0]], R=[[r]])


class TestScoreBatch:
    def test_sum_of_two_gaussian_scores(self):
        # Likelihood N(z; x, 1) and prior N(x; 0, 1) at x=2, z=1:
        # (1-2)/1 + (0-2)/1 = -3.
        p = ParticleSet(np.array([[2.0]]))
        prior = GaussianTarget([0.0], [[1.0]])
        ps = score_batch(p, _gaussian_obs(), prior, np.array([1.0]))
        assert ps.scores[0, 0] == pytest.approx(-3.0)

    def test_flat_prior_leaves_likelihood_score(self):
        p = ParticleSet(np.array([[2.0], [-0.5]]))
        obs = _gaussian_obs()
        z = np.array([1.0])
        ps = score_batch(p, obs, _FlatPrior(), z)
        np.testing.assert_allclose(ps.scores, obs.score_many(p.states, z))

    def test_matches_finite_differences_of_log_density(self):
        rng = np.random.default_rng(3)
        obs = _gaussian_obs(0.7)
        prior = GaussianTarget([0.4], [[2.0]])
        z = np.array([0.9])
        for _ in range(20):
            x = rng.normal(size=(1, 1)) * 2
            p = ParticleSet(x)
            ps = score_batch(p, obs, prior, z)
            step = 1e-6

            def logd(v):
                states = np.array([[v]])
                return obs.log_likelihood_many(states, z)[0] + prior.log_density_many(states)[0]

            fd = (logd(x[0, 0] + step) - logd(x[0, 0] - step)) / (2 * step)
            assert ps.scores[0, 0] == pytest.approx(fd, rel=1e-5)

    def test_nonfinite_reports_particle_index(self):
        class BadTarget:
            def score_many(self, states):
                out = np.zeros_like(states)
                out[2] = np.nan
                return out

            def log_density_many(self, states):
                return np.zeros(states.shape[0])

        with pytest.raises(FloatingPointError, match="particle 2"):
            target_score_batch(ParticleSet(np.zeros((4, 1))), BadTarget())


class TestPhiHat:
    def test_single_particle_reduces_to_score(self):
        p = ParticleSet(np.array([[1.5, -0.5]]))
        target = GaussianTarget([0.0, 0.0], np.eye(2))
        ps = target_score_batch(p, target)
        g = gram_and_grads(p, IsotropicRbf(1.0))
        np.testing.assert_allclose(phi_hat(p, ps, g), ps.scores)

    def test_two_particle_hand_value(self):
        # Target N(0,1), particles -1 and +1, h=1:
        # phi(x2) = 0.5 * [s1*K12 + gradK[1->2] + s2*1 + 0]
        #         = 0.5 * (-1 + 5 exp(-4)).
        p = ParticleSet(np.array([[-1.0], [1.0]]))
        target = GaussianTarget([0.0], [[1.0]])
        ps = target_score_batch(p, target)
        g = gram_and_grads(p, IsotropicRbf(1.0))
        phi = phi_hat(p, ps, g)
        expected = 0.5 * (-1.0 + 5.0 * np.exp(-4.0))
        assert phi[1, 0] == pytest.approx(expected)
        assert phi[0, 0] == pytest.approx(-expected)

    def test_stein_identity_monte_carlo(self):
        # Particles already distributed as the target: the average transport
        # direction nearly vanishes.
        target = GaussianTarget([0.0, 0.0], np.eye(2))
        for seed in range(3):
            rng = np.random.default_rng(seed)
            p = ParticleSet(rng.normal(size=(1000, 2)))
            ps = target_score_batch(p, target)
            g = gram_and_grads(p, IsotropicRbf(median_heuristic(p)))
            phi = phi_hat(p, ps, g)
            assert np.linalg.norm(phi.mean(axis=0)) <= 0.1

    def test_translation_equivariance(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(30, 2))
        shift = np.array([5.0, -3.0])
        t0 = GaussianTarget([0.0, 0.0], np.diag([1.0, 2.0]))
        t1 = GaussianTarget(shift, np.diag([1.0, 2.0]))
        h = 1.3
        p0, p1 = ParticleSet(x), ParticleSet(x + shift)
        phi0 = phi_hat(p0, target_score_batch(p0, t0), gram_and_grads(p0, IsotropicRbf(h)))
        phi1 = phi_hat(p1, target_score_batch(p1, t1), gram_and_grads(p1, IsotropicRbf(h)))
        np.testing.assert_allclose(phi0, phi1, atol=1e-12)

    def test_repulsion_only_internal_forces_cancel(self):
        rng = np.random.default_rng(4)
        p = ParticleSet(rng.normal(size=(25, 3)))
        zero_scores = np.zeros((25, 3))
        g = gram_and_grads(p, IsotropicRbf(0.8))
        phi = phi_hat(p, zero_scores, g)
        np.testing.assert_allclose(phi.sum(axis=0), np.zeros(3), atol=1e-12)

    def test_shape_mismatch_rejected(self):
        p = ParticleSet(np.zeros((3, 2)))
        g = gram_and_grads(p, IsotropicRbf(1.0))
        with pytest.raises(ValueError):
            phi_hat(p, np.zeros((4, 2)), g)


class TestSteinTraceDiagnostic:
    @staticmethod
    def _linear_test_fn(x):
        return x, np.eye(x.shape[0])

    def test_point_mass_at_mode(self):
        # All particles at the mode of N(0,1) with phi(x)=x: 0*0 + 1 = 1.
        p = ParticleSet(np.zeros((10, 1)))
        ps = target_score_batch(p, GaussianTarget([0.0], [[1.0]]))
        assert stein_trace_diagnostic(p, ps, self._linear_test_fn) == pytest.approx(1.0)

    def test_gaussian_samples_near_zero(self):
        rng = np.random.default_rng(15)
        p = ParticleSet(rng.normal(size=(10_000, 1)))
        ps = target_score_batch(p, GaussianTarget([0.0], [[1.0]]))
        assert abs(stein_trace_diagnostic(p, ps, self._linear_test_fn)) <= 0.05


class TestPriorApproximations:
    def test_gaussian_fit_matches_moments(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(500, 2)) @ np.array([[1.0, 0.3], [0.0, 0.5]])
        p = ParticleSet(x)
        fit = GaussianTarget.fit(p)
        from steinfilter import particle_mean_cov

        mean, cov = particle_mean_cov(p)
        np.testing.assert_allclose(fit.mean, mean)
        np.testing.assert_allclose(fit.cov, cov + 1e-6 * np.eye(2))

    def test_kde_score_matches_finite_differences(self):
        rng = np.random.default_rng(44)
        anchors = ParticleSet(rng.normal(size=(15, 2)))
        kde = KdePriorApprox(anchors)
        for _ in range(10):
            x = rng.normal(size=(1, 2))
            score = kde.score_many(x)[0]
            step = 1e-6
            fd = np.zeros(2)
            for i in range(2):
                e = np.zeros(2)
                e[i] = step
                fd[i] = (
                    kde.log_density_many(x + e)[0] - kde.log_density_many(x - e)[0]
                ) / (2 * step)
            np.testing.assert_allclose(score, fd, rtol=1e-5, atol=1e-8)

    def test_mixture_scores_match_finite_differences(self):
        target = GaussianMixtureTarget(
            means=[np.array([-2.0]), np.array([2.0])],
            covs=[np.array([[0.25]]), np.array([[0.25]])],
        )
        rng = np.random.default_rng(10)
        for _ in range(20):
            x = rng.normal(size=(1, 1)) * 3
            score = target.score_many(x)[0, 0]
            step = 1e-6
            fd = (
                target.log_density_many(x + step)[0] - target.log_density_many(x - step)[0]
            ) / (2 * step)
            assert score == pytest.approx(fd, rel=1e-5, abs=1e-8)
