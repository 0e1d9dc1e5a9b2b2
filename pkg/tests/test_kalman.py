import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spd
from swarmmon.kalman import (EstimatorState, KalmanError, NoiseModel, closed_form_covariance,
                             delta_max, kalman_gain, kf_step, kf_update)


def iterate_static(sigma0, K_va, k):
    est = np.zeros(2)
    cov = sigma0.copy()
    for _ in range(k):
        est, cov = kf_update(est, cov, np.zeros(2), np.zeros(2), K_va)
    return cov


class TestStep:
    def test_perfect_prior_ignores_measurement(self):
        noise = NoiseModel(np.eye(2), 2.0)
        s = EstimatorState(np.array([1.0, -1.0]), np.zeros((2, 2)), 1.0)
        out = kf_step(s, [0.5, 0.25], [100.0, 100.0], noise)
        np.testing.assert_array_equal(out.est, [1.5, -0.75])
        np.testing.assert_array_equal(out.cov, np.zeros((2, 2)))

    def test_equal_trust_average(self):
        noise = NoiseModel(np.eye(2), 2.0)
        s = EstimatorState(np.zeros(2), np.eye(2), 1.0)
        np.testing.assert_allclose(kalman_gain(s.cov, noise.K_va), 0.5 * np.eye(2))
        out = kf_step(s, [0.0, 0.0], [2.0, 2.0], noise)
        np.testing.assert_allclose(out.est, [1.0, 1.0])
        np.testing.assert_allclose(out.cov, 0.5 * np.eye(2))

    def test_matches_information_form(self, rng):
        for _ in range(20):
            P, R = random_spd(rng), random_spd(rng)
            x, u, y = rng.normal(size=(3, 2))
            est, cov = kf_update(x, P, u, y, R)
            info = np.linalg.inv(P) + np.linalg.inv(R)
            cov_ref = np.linalg.inv(info)
            est_ref = cov_ref @ (np.linalg.solve(P, x + u) + np.linalg.solve(R, y))
            np.testing.assert_allclose(cov, cov_ref, atol=1e-10)
            np.testing.assert_allclose(est, est_ref, atol=1e-9)

    def test_batched_equals_loop(self, rng):
        est = rng.normal(size=(3, 4, 2))
        cov = np.stack([[random_spd(rng) for _ in range(4)] for _ in range(3)])
        u, y = rng.normal(size=(2, 3, 4, 2))
        R = random_spd(rng)
        e_b, c_b = kf_update(est, cov, u, y, R)
        for a in range(3):
            for b in range(4):
                e, c = kf_update(est[a, b], cov[a, b], u[a, b], y[a, b], R)
                np.testing.assert_allclose(e_b[a, b], e, rtol=1e-12, atol=1e-12)
                np.testing.assert_allclose(c_b[a, b], c, rtol=1e-12, atol=1e-12)

    def test_covariance_stays_symmetric(self, rng):
        cov = iterate_static(random_spd(rng), random_spd(rng), 50)
        np.testing.assert_array_equal(cov, cov.T)

    def test_degenerate_innovation(self):
        with pytest.raises(KalmanError, match="degenerate innovation covariance"):
            kalman_gain(np.zeros((2, 2)), np.zeros((2, 2)))


class TestClosedForm:
    def test_k_zero(self, rng):
        S = random_spd(rng)
        np.testing.assert_array_equal(closed_form_covariance(S, random_spd(rng), 0), S)

    @given(st.floats(0.01, 10), st.floats(0.01, 10), st.integers(0, 500))
    def test_scalar_reduction(self, sigma, r, k):
        got = closed_form_covariance(sigma * np.eye(2), r * np.eye(2), k)
        np.testing.assert_allclose(got, r * sigma / (r + k * sigma) * np.eye(2), rtol=1e-12)

    def test_identity_three_steps(self):
        np.testing.assert_allclose(closed_form_covariance(np.eye(2), np.eye(2), 3), 0.25 * np.eye(2))
        np.testing.assert_allclose(iterate_static(np.eye(2), np.eye(2), 3), 0.25 * np.eye(2))

    def test_iteration_matches(self, rng):
        for _ in range(10):
            S0, R = random_spd(rng), random_spd(rng)
            np.testing.assert_allclose(iterate_static(S0, R, 200), closed_form_covariance(S0, R, 200),
                                       atol=1e-10)


class TestDeltaMax:
    def test_examples(self):
        assert delta_max(0, 10, 1.0, 0.25) == 100.0
        assert delta_max(100, 10, 1.0, 0.25) == pytest.approx(100 * 0.25 / 100.25)
        ks = np.arange(1, 1000)
        assert np.all(delta_max(ks, 7, 2.0, 3.0) <= 49 * 3.0 / ks)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            delta_max(1, 3, 0.0, 1.0)
        with pytest.raises(ValueError):
            delta_max(1, 3, 1.0, -1.0)

    def test_dominates_covariance_trace(self, rng):
        N, s_max = 5, 2.0
        noise = NoiseModel(np.diag([0.3, 0.2]), 0.5)
        cov = np.broadcast_to(s_max / 2 * np.eye(2), (N, 2, 2)).copy()
        est = np.zeros((N, 2))
        for k in range(1, 300):
            est, cov = kf_update(est, cov, 0 * est, est, noise.K_va)
            assert np.trace(cov, axis1=-2, axis2=-1).sum() <= delta_max(k, N, s_max, noise.v_max)


class TestNoiseModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(np.array([[1.0, 2.0], [2.0, 1.0]]), 10.0)
        with pytest.raises(ValueError):
            NoiseModel(np.eye(2), 1.0)
        with pytest.raises(ValueError):
            NoiseModel(np.array([[1.0, 0.1], [0.0, 1.0]]), 3.0)

    def test_initial_prior(self, rng):
        st0 = EstimatorState.initial(np.zeros((4000, 2)), 2.0, rng)
        assert np.mean(np.sum(st0.est ** 2, axis=1)) == pytest.approx(2.0, rel=0.05)
        assert st0.total_trace() == pytest.approx(4000 * 2.0)
