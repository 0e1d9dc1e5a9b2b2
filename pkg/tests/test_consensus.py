import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from swarmmon.consensus import (BoundParams, ConsensusState, GossipError, apply_pairs,
                                build_expected_mixing, expected_mixing_matrix, gossip_pair_update,
                                gossip_step, optimize_weights, pair_mixing_matrix, project_simplex,
                                rho_dynamic, rho_dynamic_limit, rho_series, rho_static, sample_pairs,
                                validate_weights, with_u_max)
from swarmmon.core import Graph, is_connected, metropolis_weights
from swarmmon.kalman import delta_max


def mixing_by_definition(W):
    n = len(W)
    return sum(W[i, j] * pair_mixing_matrix(n, i, j) for i in range(n) for j in range(n)) / n


def lambda2_by_eigvals(V):
    return float(np.sort(np.linalg.eigvalsh(V))[-2])


def params(**kw):
    base = dict(N=10, s_max=1.0, v_max=0.25, u_max=0.0, zeta_max=10.0, L1=1.0, L2=0.3, lambda2=0.9)
    base.update(kw)
    return BoundParams(**base)


class TestMixing:
    def test_pair_matrix_is_pair_average(self):
        V = pair_mixing_matrix(3, 0, 2)
        np.testing.assert_allclose(V @ np.array([0.0, 5.0, 2.0]), [1.0, 5.0, 1.0])
        np.testing.assert_array_equal(pair_mixing_matrix(3, 1, 1), np.eye(3))

    def test_two_agents_full_exchange(self):
        # every slot averages the only pair, so consensus is reached in one step
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        spec = build_expected_mixing(W)
        np.testing.assert_allclose(spec.V, [[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(spec.V, mixing_by_definition(W))
        assert spec.lambda2 == pytest.approx(0.0, abs=1e-15)

    def test_disconnected_has_unit_lambda2(self):
        W = np.zeros((4, 4))
        W[0, 1] = W[1, 0] = W[2, 3] = W[3, 2] = 1.0
        assert build_expected_mixing(W).lambda2 == pytest.approx(1.0)

    @given(st.integers(2, 12), st.floats(0.25, 0.9), st.integers(0, 2 ** 32 - 1))
    def test_closed_form_matches_definition(self, n, radius, seed):
        g = Graph.random_geometric(n, radius, np.random.default_rng(seed))
        if not is_connected(g):
            return
        W = metropolis_weights(g)
        V = expected_mixing_matrix(W)
        np.testing.assert_allclose(V, mixing_by_definition(W), atol=1e-14)
        np.testing.assert_allclose(V.sum(axis=0), 1.0)
        np.testing.assert_allclose(V.sum(axis=1), 1.0)
        lam = build_expected_mixing(W).lambda2
        assert lam < 1.0
        assert lam == pytest.approx(lambda2_by_eigvals(V), abs=1e-12)

    @pytest.mark.parametrize("g", [Graph.ring(10), Graph.path(7), Graph.star(9), Graph.complete(6)])
    def test_connected_gap(self, g):
        assert build_expected_mixing(metropolis_weights(g)).lambda2 < 1.0


class TestGossipUpdate:
    def test_pure_average(self):
        s = ConsensusState.start([0.0, 2.0])
        out = gossip_pair_update(s, 0, 1, [0.0, 2.0])
        np.testing.assert_array_equal(out.zeta[:, 0], [1.0, 1.0])

    def test_tracking_increment(self):
        s = ConsensusState.start([0.0, 2.0, 4.0])
        nxt = np.array([0.1, 2.0 - 0.1, 4.5])
        out = gossip_pair_update(s, 0, 1, nxt)
        np.testing.assert_allclose(out.zeta[:, 0], [1.1, 0.9, 4.5])
        assert out.k == 1

    def test_non_neighbor(self):
        with pytest.raises(GossipError, match="non-neighbor gossip"):
            gossip_pair_update(ConsensusState.start([0.0, 1.0, 2.0]), 0, 2, [0.0, 1.0, 2.0],
                               graph=Graph.path(3))

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20), st.integers(0, 2 ** 32 - 1))
    def test_sum_preserved(self, vals, seed):
        rng = np.random.default_rng(seed)
        s = ConsensusState.start(vals)
        total = s.zeta.sum()
        W = metropolis_weights(Graph.complete(len(vals)))
        for _ in range(50):
            s = gossip_step(s, W, rng)
        assert abs(s.zeta.sum() - total) <= 1e-12 * max(1.0, np.abs(vals).sum())

    def test_step_uses_sampled_pair(self):
        class Fixed:
            def random(self, n):
                return np.array([0.0, 0.9])

        W = metropolis_weights(Graph.path(3))
        s = ConsensusState.start([0.0, 3.0, 6.0])
        ref = gossip_pair_update(s, 0, 1, s.theta_hat)
        np.testing.assert_array_equal(gossip_step(s, W, Fixed()).zeta, ref.zeta)

    def test_batched_pairs(self, rng):
        z = rng.normal(size=(5, 4, 2))
        i = np.array([0, 1, 2, 3, 0])
        j = np.array([1, 2, 3, 0, 0])
        ref = z.copy()
        for r in range(5):
            apply_pairs(ref[r], i[r], j[r])
        apply_pairs(z, i, j)
        np.testing.assert_array_equal(z, ref)

    def test_pair_frequencies(self):
        g = Graph.ring(6)
        W = metropolis_weights(g)
        W[0] = [0.1, 0.6, 0, 0, 0, 0.3]
        rng = np.random.default_rng(7)
        u = rng.random((100_000, 2))
        i, j = sample_pairs(np.cumsum(W, axis=1), u[:, 0], u[:, 1])
        n = len(W)
        counts = np.zeros((n, n))
        np.add.at(counts, (np.minimum(i, j), np.maximum(i, j)), 1)
        expected = np.triu(W + W.T, 1) / n
        np.fill_diagonal(expected, np.diag(W) / n)
        mask = expected > 0
        assert np.all(counts[~mask] == 0)
        chi = stats.chisquare(counts[mask], expected[mask] * len(u))
        assert chi.pvalue > 0.01


def direct_rho(k, p, dynamic=True):
    drift = 2 * p.N * p.u_max ** 2 if dynamic else 0.0
    s = sum(p.lambda2 ** (k - t) * p.L1 * math.sqrt(delta_max(t, p.N, p.s_max, p.v_max)
                                                    + delta_max(t - 1, p.N, p.s_max, p.v_max) + drift)
            for t in range(1, k + 1))
    return p.lambda2 ** k * math.sqrt(p.N) * p.zeta_max + s + p.L2 * math.sqrt(delta_max(k, p.N, p.s_max, p.v_max))


class TestBounds:
    def test_k_zero(self):
        p = params()
        assert rho_static(0, p) == pytest.approx(math.sqrt(10) * 10 + 0.3 * math.sqrt(100 * 1.0))

    @given(st.floats(0.0, 0.99), st.floats(0.0, 2.0), st.integers(0, 300))
    def test_recursion_equals_direct_sum(self, lam, u, k):
        p = params(lambda2=lam, u_max=u)
        assert rho_dynamic(k, p) == pytest.approx(direct_rho(k, p), rel=1e-12)
        assert rho_static(k, p) == pytest.approx(direct_rho(k, p, dynamic=False), rel=1e-12)

    def test_static_vanishes(self):
        # constants of the scaled case study: 800 m wide arena, unit sensor noise
        p = params(lambda2=0.9, zeta_max=800.0, s_max=1.0, v_max=2.0)
        assert rho_static(100_000, p) < 1e-3 * rho_static(0, p)
        tail = rho_series(100_000, p, dynamic=False)[1000::1000]
        assert np.all(np.diff(tail) < 0)

    def test_no_motion_reduces_to_static(self):
        p = params(u_max=0.0)
        np.testing.assert_array_equal(rho_series(500, p), rho_series(500, p, dynamic=False))

    def test_dynamic_floor(self):
        p = params(u_max=0.5, lambda2=0.8)
        floor = rho_dynamic_limit(p)
        gap_4 = rho_dynamic(10_000, p) - floor
        gap_5 = rho_dynamic(100_000, p) - floor
        assert 0 < gap_5 < gap_4 < 0.01 * floor

    def test_monotone_in_u_max(self):
        p = params(u_max=0.2)
        assert np.all(rho_series(1000, with_u_max(p, 0.4))[1:] > rho_series(1000, p)[1:])

    def test_validation(self):
        with pytest.raises(ValueError):
            params(lambda2=1.0)
        with pytest.raises(ValueError):
            params(s_max=0.0)


def grid_oracle_two_agents(n_grid=2001):
    best = (np.inf, None)
    for a in np.linspace(0, 1, n_grid):
        for b in (a,) if n_grid > 200 else np.linspace(0, 1, n_grid):
            W = np.array([[1 - a, a], [b, 1 - b]])
            lam = lambda2_by_eigvals(mixing_by_definition(W))
            best = min(best, (lam, (a, b)), key=lambda t: t[0])
    return best


class TestOptimizer:
    def test_simplex_projection_kkt(self, rng):
        for _ in range(200):
            v = rng.normal(size=rng.integers(1, 8)) * 3
            x = project_simplex(v)
            assert x.sum() == pytest.approx(1.0) and np.all(x >= 0)
            # KKT: v - x is constant on the support and no larger off it
            g = v - x
            sup = x > 1e-12
            assert np.ptp(g[sup]) < 1e-9
            if (~sup).any():
                assert g[~sup].max() <= g[sup].min() + 1e-9

    def test_simplex_projection_is_nearest(self, rng):
        v = rng.normal(size=5)
        x = project_simplex(v)
        for _ in range(500):
            y = rng.dirichlet(np.ones(5))
            assert np.linalg.norm(v - x) <= np.linalg.norm(v - y) + 1e-12

    def test_two_agents_matches_grid(self):
        lam_grid, _ = grid_oracle_two_agents(101)
        res = optimize_weights(Graph.complete(2))
        assert res.spectrum.lambda2 == pytest.approx(lam_grid, abs=1e-6)
        np.testing.assert_allclose(res.W, [[0, 1], [1, 0]], atol=1e-6)

    @pytest.mark.parametrize("g", [Graph.ring(4), Graph.ring(10), Graph.path(5), Graph.star(6),
                                   Graph.complete(5)])
    def test_never_worse_than_start(self, g):
        res = optimize_weights(g, iters=200)
        assert res.spectrum.lambda2 <= build_expected_mixing(metropolis_weights(g)).lambda2 + 1e-9
        validate_weights(res.W, g)

    def test_uniform_complete_not_worsened(self):
        g = Graph.complete(5)
        W_uniform = np.full((5, 5), 0.25)
        np.fill_diagonal(W_uniform, 0.0)
        oracle = lambda2_by_eigvals(mixing_by_definition(W_uniform))
        res = optimize_weights(g, iters=200, W0=W_uniform)
        assert res.spectrum.lambda2 <= oracle + 1e-12

    def test_path_three_support(self):
        res = optimize_weights(Graph.path(3), iters=100)
        assert res.W[0, 2] == 0.0 and res.W[2, 0] == 0.0
        np.testing.assert_allclose(res.W.sum(axis=1), 1.0)

    def test_disconnected(self):
        with pytest.raises(ValueError):
            optimize_weights(Graph(3, frozenset({(0, 1)})))
