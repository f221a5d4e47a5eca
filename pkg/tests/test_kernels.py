import numpy as np
import pytest

from steinfilter import (
    IsotropicRbf,
    ParticleSet,
    ScaledRbf,
    gram_and_grads,
    median_heuristic,
    metric_from_curvature,
    rbf_eval,
    scaled_rbf_eval,
)
from steinfilter.kernels import METRIC_EIGENVALUE_FLOOR


class TestRbfEval:
    def test_zero_distance(self):
        x = np.array([1.0, -2.0])
        assert rbf_eval(x, x, 3.0) == 1.0

    def test_direct_substitution(self):
        # ||x - x'||^2 = 4, h = 4 -> exp(-1).
        assert rbf_eval(np.array([0.0, 0.0]), np.array([0.0, 2.0]), 4.0) == pytest.approx(
            np.exp(-1.0)
        )

    def test_symmetry(self):
        a, b = np.array([0.3, 1.0]), np.array([-1.2, 0.4])
        assert rbf_eval(a, b, 2.5) == rbf_eval(b, a, 2.5)

    def test_bad_bandwidth(self):
        with pytest.raises(ValueError):
            rbf_eval(np.zeros(1), np.ones(1), 0.0)


class TestScaledRbfEval:
    def test_zero_distance(self):
        x = np.array([1.0, 2.0])
        assert scaled_rbf_eval(x, x, np.eye(2), 2) == 1.0

    def test_identity_metric_reduces_to_isotropic(self):
        a, b = np.array([0.5, -1.0, 2.0]), np.array([1.5, 0.0, 0.5])
        assert scaled_rbf_eval(a, b, np.eye(3), 3) == pytest.approx(rbf_eval(a, b, 3.0))

    def test_direct_substitution(self):
        # delta (1,1), M diag(2, 0.5): quad = 2.5, d=2 -> exp(-1.25).
        val = scaled_rbf_eval(np.array([1.0, 1.0]), np.zeros(2), np.diag([2.0, 0.5]), 2)
        assert val == pytest.approx(np.exp(-1.25))


class TestMedianHeuristic:
    def test_two_particles(self):
        p = ParticleSet(np.array([[0.0], [2.0]]))
        assert median_heuristic(p) == pytest.approx(4.0 / np.log(2.0))

    def test_coincident_fallback(self):
        p = ParticleSet(np.zeros((5, 2)))
        assert median_heuristic(p) == 1.0

    def test_scaling_homogeneity(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(20, 3))
        h = median_heuristic(ParticleSet(x))
        h_scaled = median_heuristic(ParticleSet(2.5 * x))
        assert h_scaled == pytest.approx(2.5**2 * h)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            median_heuristic(ParticleSet(np.zeros((1, 1))))


class TestMetricFromCurvature:
    def test_identical_inputs(self):
        prec = np.array([[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(metric_from_curvature([prec] * 7), prec)

    def test_arithmetic_mean(self):
        m = metric_from_curvature([np.diag([2.0, 0.0]), np.diag([0.0, 2.0])])
        np.testing.assert_allclose(m, np.eye(2), atol=1e-12)

    def test_negative_eigenvalue_clamped(self):
        m = metric_from_curvature([np.diag([1.0, -1e-3])])
        eig = np.linalg.eigvalsh(m)
        assert eig.min() == pytest.approx(METRIC_EIGENVALUE_FLOOR)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            metric_from_curvature([])


def _fd_kernel_grad(states, spec, j, l, step=1e-6):
    """Central finite differences of k(x^j, x^l) in x^j."""
    from steinfilter.kernels import rbf_eval as iso
    from steinfilter.kernels import scaled_rbf_eval as aniso

    def k_of(xj):
        if isinstance(spec, IsotropicRbf):
            return iso(xj, states[l], spec.bandwidth)
        return aniso(xj, states[l], spec.metric, spec.dim)

    d = states.shape[1]
    grad = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        grad[i] = (k_of(states[j] + e) - k_of(states[j] - e)) / (2 * step)
    return grad


class TestGramAndGrads:
    def test_single_particle(self):
        g = gram_and_grads(ParticleSet(np.array([[1.0, 2.0]])), IsotropicRbf(1.0))
        np.testing.assert_array_equal(g.values, [[1.0]])
        np.testing.assert_array_equal(g.grad, np.zeros((1, 1, 2)))

    def test_two_particle_hand_values(self):
        # x1=-1, x2=+1, h=1: K12 = exp(-4), grad[0,1] = -2*(-2)*exp(-4).
        g = gram_and_grads(ParticleSet(np.array([[-1.0], [1.0]])), IsotropicRbf(1.0))
        assert g.values[0, 1] == pytest.approx(np.exp(-4.0))
        assert g.grad[0, 1, 0] == pytest.approx(4.0 * np.exp(-4.0))
        assert g.grad[1, 0, 0] == pytest.approx(-4.0 * np.exp(-4.0))
        np.testing.assert_array_equal(g.grad[np.arange(2), np.arange(2)], np.zeros((2, 1)))

    @pytest.mark.parametrize(
        "spec",
        [
            IsotropicRbf(0.7),
            ScaledRbf(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]])),
        ],
        ids=["isotropic", "scaled"],
    )
    def test_gradients_match_finite_differences(self, spec):
        rng = np.random.default_rng(4)
        states = rng.normal(size=(6, 3))
        g = gram_and_grads(ParticleSet(states), spec)
        for j in range(6):
            for l in range(6):
                if j == l:
                    continue
                fd = _fd_kernel_grad(states, spec, j, l)
                np.testing.assert_allclose(g.grad[j, l], fd, rtol=1e-6, atol=1e-9)

    def test_gram_positive_definite(self):
        rng = np.random.default_rng(9)
        for n in (5, 20, 50):
            states = rng.normal(size=(n, 4))
            g = gram_and_grads(ParticleSet(states), IsotropicRbf(2.0))
            assert np.linalg.eigvalsh(g.values).min() > 0

    def test_unit_diagonal_and_symmetry(self):
        rng = np.random.default_rng(1)
        p = ParticleSet(rng.normal(size=(15, 2)))
        g = gram_and_grads(p, IsotropicRbf(1.5))
        np.testing.assert_allclose(np.diag(g.values), 1.0)
        np.testing.assert_allclose(g.values, g.values.T)
        assert g.values.min() > 0 and g.values.max() <= 1

    def test_exchange_antisymmetry(self):
        # Translation invariance: grad wrt the first argument flips sign when
        # the roles of the two particles swap.
        rng = np.random.default_rng(8)
        p = ParticleSet(rng.normal(size=(7, 3)))
        for spec in (IsotropicRbf(1.1), ScaledRbf(np.diag([1.0, 2.0, 0.5]))):
            g = gram_and_grads(p, spec)
            np.testing.assert_allclose(g.grad, -np.swapaxes(g.grad, 0, 1), atol=1e-14)

    def test_scaled_with_scalar_metric_matches_isotropic(self):
        rng = np.random.default_rng(5)
        p = ParticleSet(rng.normal(size=(10, 4)))
        h = 1.7
        iso = gram_and_grads(p, IsotropicRbf(h))
        scaled = gram_and_grads(p, ScaledRbf((4 / h) * np.eye(4)))
        np.testing.assert_allclose(iso.values, scaled.values, atol=1e-14)
        np.testing.assert_allclose(iso.grad, scaled.grad, atol=1e-14)
