import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbcentrality.errors import NumericalError, ValidationError
from vbcentrality.sparse_gp import (KernelConfig, SparseGpState, jittered_cholesky, kernel_eval,
                                    kernel_matrix, predictive_moments, select_inducing_kmeans)


def naive_kernel(x, y, ls, amp):
    return amp * math.exp(-0.5 * sum((a - b) ** 2 / l**2 for a, b, l in zip(x, y, ls)))


def random_state(rng, m=5, d=2, amp=1.3):
    z = rng.normal(size=(m, d))
    a = rng.normal(size=(m, m))
    return SparseGpState(z, rng.normal(size=m), 0.3 * a @ a.T / m + 0.05 * np.eye(m),
                         KernelConfig.ard(rng.uniform(0.5, 2.0, d), amp))


class TestKernel:
    def test_zero_distance_gives_amplitude(self):
        assert kernel_eval(KernelConfig.se(), [0.3, 0.2], [0.3, 0.2]) == 1.0
        assert kernel_eval(KernelConfig.se(2.0, 3.5), [1.0], [1.0]) == 3.5

    def test_far_apart_vanishes(self):
        assert kernel_eval(KernelConfig.se(), [0.0], [1e3]) == 0.0

    def test_lengthscale_screening(self):
        k = kernel_eval(KernelConfig.ard([1.0, 1e12]), [0.0, 0.0], [1.0, 5.0])
        assert k == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert k == pytest.approx(0.60653, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            kernel_eval(KernelConfig.se(), [0.0, 1.0], [0.0])
        with pytest.raises(ValidationError):
            kernel_matrix(KernelConfig.ard([1.0, 1.0]), np.zeros((2, 3)), np.zeros((2, 3)))

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            KernelConfig.se(-1.0)
        with pytest.raises(ValidationError):
            KernelConfig("se", (1.0, 2.0))

    def test_matrix_matches_naive(self, rng):
        x, y = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
        ls, amp = (0.7, 1.9, 1.1), 2.2
        k = kernel_matrix(KernelConfig.ard(ls, amp), x, y)
        oracle = np.array([[naive_kernel(a, b, ls, amp) for b in y] for a in x])
        assert np.allclose(k, oracle, rtol=1e-13, atol=0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 4), st.floats(0.1, 10.0), st.integers(0, 2**31 - 1))
    def test_ard_with_equal_lengthscales_is_se_bitwise(self, d, ls, seed):
        x = np.random.default_rng(seed).normal(size=(7, d))
        se = kernel_matrix(KernelConfig.se(ls, 1.7), x, x)
        ard = kernel_matrix(KernelConfig.ard([ls] * d, 1.7), x, x)
        assert np.array_equal(se, ard)
        assert np.array_equal(se, se.T)


class TestJitter:
    def test_passes_at_default_jitter(self, rng):
        x = rng.normal(size=(20, 2))
        _, eps = jittered_cholesky(kernel_matrix(KernelConfig.se(), x, x))
        assert eps == 1e-8

    def test_escalates_and_logs(self, caplog):
        # smallest eigenvalue -5e-8: fails at 1e-8, succeeds at 1e-7
        q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))
        k = q @ np.diag([1.0, 0.5, -5e-8]) @ q.T
        with caplog.at_level(logging.WARNING):
            _, eps = jittered_cholesky(k)
        assert eps > 1e-8
        assert "retrying" in caplog.text

    def test_gives_up_beyond_max(self):
        with pytest.raises(NumericalError):
            jittered_cholesky(-np.eye(3))


class TestPredictive:
    def test_interpolates_at_inducing_input(self, rng):
        z = rng.normal(size=(4, 2))
        u = rng.normal(size=4)
        state = SparseGpState(z, u, np.zeros((4, 4)), KernelConfig.se(1.0, jitter=1e-12))
        for k in range(4):
            mean, var = predictive_moments(state, z[k])
            assert mean == pytest.approx(u[k], abs=1e-6)
            assert var == pytest.approx(0.0, abs=1e-6)

    def test_reverts_to_prior_far_away(self, rng):
        state = random_state(rng)
        mean, var = predictive_moments(state, np.full(2, 1e4))
        assert mean == pytest.approx(0.0, abs=1e-12)
        assert var == pytest.approx(1.3, rel=1e-12)

    def test_matches_dense_oracle(self, rng):
        state = random_state(rng)
        xs = rng.normal(size=(7, 2))
        kern = state.kernel
        kmm = np.array([[naive_kernel(a, b, kern.lengthscales, kern.amplitude)
                         for b in state.inducing] for a in state.inducing])
        kmm += state.jitter_used * np.eye(5)
        inv = np.linalg.inv(kmm)
        mean, var = predictive_moments(state, xs)
        for x, m_got, v_got in zip(xs, mean, var):
            k = np.array([naive_kernel(x, z, kern.lengthscales, kern.amplitude)
                          for z in state.inducing])
            b = inv @ k
            assert m_got == pytest.approx(k @ inv @ state.mean, abs=1e-9)
            assert v_got == pytest.approx(kern.amplitude - k @ inv @ k + b @ state.cov @ b,
                                          abs=1e-9)

    def test_variance_shrinks_with_cov(self, rng):
        state = random_state(rng)
        x = rng.normal(size=(10, 2))
        prev = None
        for scale in (1.0, 0.5, 0.1, 0.0):
            _, var = predictive_moments(state.with_q(state.mean, scale * state.cov), x)
            assert np.all(var >= 0)
            if prev is not None:
                assert np.all(var <= prev + 1e-15)
            prev = var

    def test_serialisation_round_trip(self, rng):
        state = random_state(rng)
        back = SparseGpState.from_dict(state.to_dict())
        x = rng.normal(size=(5, 2))
        assert np.array_equal(predictive_moments(state, x)[0], predictive_moments(back, x)[0])


class TestKmeans:
    def test_m_equals_n_returns_points(self, rng):
        x = rng.normal(size=(8, 2))
        c = select_inducing_kmeans(x, 8, seed=1)
        assert sorted(map(tuple, c)) == sorted(map(tuple, x))

    def test_two_blobs(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(50, 2)) * 0.1
        b = rng.normal(size=(50, 2)) * 0.1 + [20.0, 20.0]
        c = select_inducing_kmeans(np.vstack([a, b]), 2, seed=0)
        c = c[np.argsort(c[:, 0])]
        assert np.allclose(c[0], a.mean(axis=0), atol=1e-6)
        assert np.allclose(c[1], b.mean(axis=0), atol=1e-6)

    def test_identical_points_warn(self):
        with pytest.warns(RuntimeWarning):
            c = select_inducing_kmeans(np.ones((5, 2)), 2, seed=0)
        assert np.array_equal(c, np.ones((2, 2)))

    def test_too_many_centroids(self):
        with pytest.raises(ValidationError):
            select_inducing_kmeans(np.zeros((3, 1)), 4)

    def test_deterministic(self, rng):
        x = rng.normal(size=(40, 3))
        assert np.array_equal(select_inducing_kmeans(x, 5, 9), select_inducing_kmeans(x, 5, 9))
