import numpy as np
import pytest

from steinfilter import RngStream
from steinfilter.models import (
    ConstantVelocityModel,
    LinearGaussianModel,
    MirroredGaussianModel,
    PositionObservationModel,
    RandomWalkTransition,
    SineBankModel,
    kalman_steady_state_cov,
    lingauss_step_oracle,
    wrap_angle,
)


def finite_difference_score(model, x, z, step=1e-5):
    d = x.shape[0]
    grad = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        grad[i] = (model.log_likelihood(x + e, z) - model.log_likelihood(x - e, z)) / (2 * step)
    return grad


class TestConstantVelocity:
    def test_deterministic_shift(self):
        m = ConstantVelocityModel(accel_noise_std=0.0)
        out = m.propagate(np.array([0.0, 0.0, 1.0, 0.0]), None, RngStream(0).child("x"))
        np.testing.assert_array_equal(out, [1.0, 0.0, 1.0, 0.0])

    def test_zero_velocity_fixed_point(self):
        m = ConstantVelocityModel(accel_noise_std=0.0)
        x = np.array([2.0, 3.0, 0.0, 0.0])
        np.testing.assert_array_equal(m.propagate_deterministic(x, None), x)

    def test_noise_variance_monte_carlo(self):
        # sigma_a = 0.1: sample variance of the velocity perturbation over
        # 10^4 draws should sit near 0.01.
        m = ConstantVelocityModel(accel_noise_std=0.1)
        x = np.tile(np.array([0.0, 0.0, 1.0, -1.0]), (10_000, 1))
        out = m.propagate_many(x, None, RngStream(99).child("mc"))
        v_var = out[:, 2:4].var(axis=0)
        assert np.all(v_var >= 0.008) and np.all(v_var <= 0.012)

    def test_zero_noise_matches_deterministic_exactly(self):
        m = ConstantVelocityModel(accel_noise_std=0.0)
        x = np.array([1.0, -2.0, 0.5, 0.25])
        np.testing.assert_array_equal(
            m.propagate(x, None, RngStream(3).child("n")), m.propagate_deterministic(x, None)
        )

    def test_linear_in_state(self):
        m = ConstantVelocityModel(accel_noise_std=0.0)
        a = np.array([1.0, 2.0, 0.3, -0.4])
        b = np.array([-0.5, 1.0, 0.1, 0.9])
        lhs = m.propagate_deterministic(2.0 * a + 3.0 * b, None)
        rhs = 2.0 * m.propagate_deterministic(a, None) + 3.0 * m.propagate_deterministic(b, None)
        np.testing.assert_allclose(lhs, rhs, atol=1e-14)


class TestSineBank:
    def test_perfect_prediction_critical_point(self):
        m = SineBankModel(n_fns=1, period_k=1.0, obs_noise_std=1.0, t=np.pi / 2)
        x = np.array([1.0, 0.0])  # A=1, phi=0 -> g = sin(pi/2 + 0) ... with k(t+phi)
        z = m.predict(x)
        assert z[0] == pytest.approx(1.0)
        ll, score = m.loglik_and_score(x, z)
        np.testing.assert_allclose(score, np.zeros(2), atol=1e-14)

    def test_zero_amplitude_gates_phase(self):
        m = SineBankModel(n_fns=2, t=0.7)
        x = np.array([0.0, 1.3, 2.0, 0.4])  # A_1 = 0
        score = m.score(x, np.array([0.5, -0.2]))
        assert score[1] == 0.0  # d/dphi_1 carries the A_1 factor
        assert score[3] != 0.0

    def test_score_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        m = SineBankModel(n_fns=3, period_k=1.0, obs_noise_std=0.3, t=1.7)
        for _ in range(20):
            x = np.empty(6)
            x[0::2] = rng.uniform(0.5, 5.0, size=3)
            x[1::2] = rng.uniform(0.0, 2 * np.pi, size=3)
            z = rng.normal(size=3)
            fd = finite_difference_score(m, x, z)
            score = m.score(x, z)
            np.testing.assert_allclose(score, fd, rtol=1e-5, atol=1e-7)

    def test_periodicity_in_phase(self):
        m = SineBankModel(n_fns=2, period_k=2.0, t=0.9)
        x = np.array([1.2, 0.3, 0.8, 1.1])
        shifted = x.copy()
        shifted[1] += 2 * np.pi / m.period_k
        z = np.array([0.4, -0.1])
        assert m.log_likelihood(x, z) == pytest.approx(m.log_likelihood(shifted, z))

    def test_curvature_psd(self):
        rng = np.random.default_rng(2)
        m = SineBankModel(n_fns=4, t=2.2)
        states = rng.normal(size=(8, 8))
        curv = m.curvature_many(states, rng.normal(size=4))
        for a in curv:
            np.testing.assert_allclose(a, a.T, atol=1e-14)
            assert np.linalg.eigvalsh(a).min() >= -1e-12


class TestLinearGaussian:
    def test_conjugate_hand_example(self):
        # Prior N(0,1), F=1, Q~0, H=1, R=1, z=1 -> posterior N(0.5, 0.5).
        m = LinearGaussianModel(F=[[1.0]], Q=[[1e-15]], Hm=[[1.0]], R=[[1.0]])
        mean, cov = lingauss_step_oracle(m, np.zeros(1), np.eye(1), None, np.array([1.0]))
        assert mean[0] == pytest.approx(0.5, abs=1e-9)
        assert cov[0, 0] == pytest.approx(0.5, abs=1e-9)

    def test_uninformative_observation(self):
        m = LinearGaussianModel(F=[[1.0]], Q=[[1e-15]], Hm=[[1.0]], R=[[1e12]])
        mean, cov = lingauss_step_oracle(m, np.array([0.3]), np.eye(1), None, np.array([50.0]))
        assert mean[0] == pytest.approx(0.3, abs=1e-6)
        assert cov[0, 0] == pytest.approx(1.0, abs=1e-6)

    def test_information_monotonicity(self):
        m = LinearGaussianModel(F=[[1.0]], Q=[[1e-15]], Hm=[[1.0]], R=[[0.1]])
        cov = np.eye(1)
        mean = np.zeros(1)
        prev = cov[0, 0]
        for _ in range(10):
            mean, cov = lingauss_step_oracle(m, mean, cov, None, np.zeros(1))
            assert cov[0, 0] < prev
            prev = cov[0, 0]

    def test_score_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        m = LinearGaussianModel(
            F=np.eye(3),
            Q=np.eye(3),
            Hm=np.array([[1.0, 0.0, 0.5], [0.0, 2.0, 0.0]]),
            R=np.array([[0.5, 0.1], [0.1, 0.4]]),
        )
        for _ in range(10):
            x = rng.normal(size=3)
            z = rng.normal(size=2)
            np.testing.assert_allclose(
                m.score(x, z), finite_difference_score(m, x, z), rtol=1e-5, atol=1e-8
            )

    def test_batch_paths_match_scalar_paths(self):
        rng = np.random.default_rng(7)
        m = LinearGaussianModel(F=np.eye(2), Q=0.1 * np.eye(2), Hm=np.eye(2), R=0.2 * np.eye(2))
        states = rng.normal(size=(6, 2))
        z = rng.normal(size=2)
        np.testing.assert_allclose(
            m.log_likelihood_many(states, z), [m.log_likelihood(x, z) for x in states]
        )
        np.testing.assert_allclose(m.score_many(states, z), [m.score(x, z) for x in states])

    def test_steady_state_is_fixed_point(self):
        m = LinearGaussianModel(F=[[0.9]], Q=[[0.2]], Hm=[[1.0]], R=[[0.5]])
        p_inf = kalman_steady_state_cov(m, np.eye(1))
        _, p_next = lingauss_step_oracle(m, np.zeros(1), p_inf, None, np.zeros(1))
        assert p_next[0, 0] == pytest.approx(p_inf[0, 0], rel=1e-9)

    def test_rejects_non_spd(self):
        with pytest.raises(ValueError):
            LinearGaussianModel(F=[[1.0]], Q=[[-1.0]], Hm=[[1.0]], R=[[1.0]])


class TestMirroredGaussian:
    def test_symmetric_modes(self):
        m = MirroredGaussianModel(noise_std=0.5)
        z = np.array([2.0])
        assert m.log_likelihood(np.array([2.0]), z) == pytest.approx(
            m.log_likelihood(np.array([-2.0]), z)
        )

    def test_score_matches_finite_differences(self):
        m = MirroredGaussianModel(noise_std=0.5)
        rng = np.random.default_rng(13)
        for _ in range(25):
            x = rng.normal(size=1) * 3
            z = np.array([2.0])
            np.testing.assert_allclose(
                m.score(x, z), finite_difference_score(m, x, z), rtol=1e-5, atol=1e-8
            )


class TestPositionObservation:
    def test_score_matches_finite_differences(self):
        m = PositionObservationModel(noise_std=0.3)
        rng = np.random.default_rng(31)
        for _ in range(10):
            x = rng.normal(size=4)
            z = rng.normal(size=2)
            np.testing.assert_allclose(
                m.score(x, z), finite_difference_score(m, x, z), rtol=1e-5, atol=1e-8
            )


class TestRandomWalk:
    def test_zero_noise_is_identity(self):
        m = RandomWalkTransition(3, 0.0)
        x = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(m.propagate(x, None, RngStream(0).child("a")), x)

    def test_control_shifts(self):
        m = RandomWalkTransition(2, 0.0)
        out = m.propagate_deterministic(np.zeros(2), np.array([1.0, -1.0]))
        np.testing.assert_array_equal(out, [1.0, -1.0])

    def test_per_dim_noise(self):
        m = RandomWalkTransition(2, np.array([0.0, 1.0]))
        out = m.propagate_many(np.zeros((5000, 2)), None, RngStream(1).child("b"))
        assert out[:, 0].std() == 0.0
        assert out[:, 1].std() == pytest.approx(1.0, rel=0.05)


def test_wrap_angle():
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)  # wraps into (-pi, pi]
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
    vals = wrap_angle(np.linspace(-20, 20, 201))
    assert np.all(vals > -np.pi - 1e-12) and np.all(vals <= np.pi + 1e-12)
