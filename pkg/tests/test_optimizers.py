import numpy as np
import pytest

from steinfilter.optimizers import AdamState, LbfgsHistory, adam_step, lbfgs_direction, lbfgs_insert


def bfgs_matrix_oracle(pairs, gamma):
    """Explicit inverse-Hessian recursion, the independent reference for the
    two-loop implementation."""
    d = pairs[0][0].size
    H = gamma * np.eye(d)
    for s, y in pairs:
        rho = 1.0 / float(y @ s)
        v = np.eye(d) - rho * np.outer(y, s)
        H = v.T @ H @ v + rho * np.outer(s, s)
    return H


class TestLbfgsInsert:
    def test_store_simple_pair(self):
        h = LbfgsHistory(5)
        assert h.insert(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert len(h) == 1 and h.rejected == 0

    def test_orthogonal_pair_rejected(self):
        h = LbfgsHistory(5)
        assert not h.insert(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert len(h) == 0 and h.rejected == 1

    def test_ring_buffer_eviction(self):
        h = LbfgsHistory(3)
        for k in range(4):
            lbfgs_insert(h, np.array([1.0 + k]), np.array([2.0]))
        assert len(h) == 3
        # Oldest pair (s=1) evicted: applying H to the last stored curvature
        # uses pairs k=1..3 only.
        assert h._s[0][0] == pytest.approx(2.0)

    def test_negative_curvature_rejected(self):
        h = LbfgsHistory(2)
        assert not h.insert(np.array([1.0]), np.array([-1.0]))
        assert h.rejected == 1


class TestLbfgsDirection:
    def test_empty_history_is_identity(self):
        h = LbfgsHistory(4)
        g = np.array([0.3, -1.2, 4.0])
        np.testing.assert_array_equal(lbfgs_direction(h, g), g)

    def test_1d_quadratic(self):
        # Curvature b: one exact pair (s, b s) makes the direction g / b.
        b = 3.5
        h = LbfgsHistory(4)
        h.insert(np.array([0.2]), np.array([b * 0.2]))
        g = np.array([1.4])
        assert h.direction(g)[0] == pytest.approx(g[0] / b)

    def test_unit_curvature_identity(self):
        # f = ||x||^2 / 2 gives y = s, so H stays the identity.
        rng = np.random.default_rng(0)
        h = LbfgsHistory(10)
        for _ in range(6):
            s = rng.normal(size=4)
            h.insert(s, s)
        g = rng.normal(size=4)
        np.testing.assert_allclose(h.direction(g), g, rtol=1e-12)

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_exact_inverse_on_conjugate_pairs(self, d):
        # d independent exact pairs taken along the eigenvectors of an SPD
        # matrix B (mutually B-conjugate) make H equal B^{-1} on their span.
        rng = np.random.default_rng(d)
        a = rng.normal(size=(d, d))
        B = a @ a.T + 0.5 * np.eye(d)
        eigval, eigvec = np.linalg.eigh(B)
        h = LbfgsHistory(d)
        for i in range(d):
            h.insert(eigvec[:, i], eigval[i] * eigvec[:, i])
        B_inv = np.linalg.inv(B)
        for _ in range(5):
            g = B @ rng.normal(size=d)
            expected = B_inv @ g
            got = h.direction(g)
            assert np.linalg.norm(got - expected) / np.linalg.norm(expected) <= 1e-8

    def test_two_loop_matches_matrix_oracle(self):
        rng = np.random.default_rng(17)
        d = 6
        a = rng.normal(size=(d, d))
        B = a @ a.T + np.eye(d)
        pairs = []
        h = LbfgsHistory(10)
        for _ in range(8):
            s = rng.normal(size=d)
            y = B @ s + 0.05 * rng.normal(size=d)
            if h.insert(s, y):
                pairs.append((s, y))
        s_l, y_l = pairs[-1]
        gamma = float(s_l @ y_l) / float(y_l @ y_l)
        H = bfgs_matrix_oracle(pairs, gamma)
        for _ in range(5):
            g = rng.normal(size=d)
            np.testing.assert_allclose(h.direction(g), H @ g, rtol=1e-10)

    def test_positive_inner_product(self):
        rng = np.random.default_rng(23)
        for trial in range(20):
            d = rng.integers(1, 8)
            h = LbfgsHistory(5)
            for _ in range(6):
                h.insert(rng.normal(size=d), rng.normal(size=d))
            g = rng.normal(size=d)
            assert float(g @ h.direction(g)) > 0

    def test_reset(self):
        h = LbfgsHistory(4)
        h.insert(np.array([1.0]), np.array([2.0]))
        h.reset()
        g = np.array([3.0])
        np.testing.assert_array_equal(h.direction(g), g)


class TestAdam:
    def test_zero_gradient(self):
        state = AdamState(3, lr=0.1)
        step, _ = adam_step(state, np.zeros(3))
        np.testing.assert_array_equal(step, np.zeros(3))

    def test_first_step_magnitude(self):
        state = AdamState(2, lr=0.05)
        step, _ = adam_step(state, np.array([4.0, -0.3]))
        np.testing.assert_allclose(np.abs(step), 0.05, rtol=1e-6)
        assert step[0] > 0 and step[1] < 0  # ascent direction

    def test_constant_gradient_fixed_point(self):
        state = AdamState(1, lr=0.01)
        g = np.array([0.7])
        for _ in range(10_000):
            step, state = adam_step(state, g)
        assert abs(step[0]) == pytest.approx(0.01, rel=0.01)

    def test_scale_invariance_after_burn_in(self):
        s1, s2 = AdamState(1, lr=0.02), AdamState(1, lr=0.02)
        for _ in range(500):
            step1, s1 = adam_step(s1, np.array([0.3]))
            step2, s2 = adam_step(s2, np.array([3.0]))
        assert abs(step1[0] - step2[0]) <= 1e-6
