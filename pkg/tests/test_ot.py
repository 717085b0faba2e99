"""Tests for entropic transport, the exact LP oracle, and feature discrepancy."""

import numpy as np
import pytest

from ltlab.autodiff import Rng
from ltlab.errors import ConfigError, ContractError, ConvergenceError
from ltlab.ot import (
    SinkhornConfig,
    cost_matrix,
    exact_ot_small,
    layer_discrepancy,
    sinkhorn,
    wasserstein_1d,
)


def random_instance(seed, n_range=(2, 7), dim=3, offset=1.0):
    rng = Rng(seed)
    n = int(rng.integers(*n_range))
    m = int(rng.integers(*n_range))
    x = rng.normal((n, dim))
    y = rng.normal((m, dim)) + offset
    a = rng.uniform((n,), 0.5, 1.5)
    b = rng.uniform((m,), 0.5, 1.5)
    return a / a.sum(), b / b.sum(), cost_matrix(x, y, 2.0)


class TestCostMatrix:
    def test_identical_points_zero_diagonal(self):
        x = Rng(0).normal((4, 3))
        np.testing.assert_allclose(np.diag(cost_matrix(x, x, 2.0)), 0.0, atol=1e-12)

    def test_scalar_points_squared(self):
        np.testing.assert_allclose(cost_matrix([[0.0]], [[3.0]], 2.0), [[9.0]])

    def test_transpose_symmetry(self):
        x = Rng(1).normal((4, 3))
        y = Rng(2).normal((5, 3))
        np.testing.assert_allclose(
            cost_matrix(x, y, 1.7), cost_matrix(y, x, 1.7).T, atol=1e-12
        )

    def test_dim_mismatch(self):
        with pytest.raises(ConfigError):
            cost_matrix(np.zeros((2, 3)), np.zeros((2, 4)))


class TestSinkhorn:
    def test_single_cell_forced_plan(self):
        res = sinkhorn([1.0], [1.0], [[2.5]], SinkhornConfig(epsilon=0.1))
        np.testing.assert_allclose(res.plan.plan, [[1.0]], atol=1e-12)
        assert abs(res.cost - 2.5) < 1e-12

    def test_identity_coupling_dominates(self):
        c = np.full((4, 4), 100.0)
        np.fill_diagonal(c, 0.0)
        a = np.full(4, 0.25)
        res = sinkhorn(a, a, c, SinkhornConfig(epsilon=1e-3))
        assert res.cost < 1e-6

    def test_marginals_match_within_tolerance(self):
        a, b, c = random_instance(42)
        cfg = SinkhornConfig(epsilon=1e-2, marginal_tol=1e-9)
        res = sinkhorn(a, b, c, cfg)
        plan = res.plan.plan
        assert np.all(plan >= 0)
        assert np.abs(plan.sum(axis=1) - a).sum() <= cfg.marginal_tol
        assert np.abs(plan.sum(axis=0) - b).sum() <= cfg.marginal_tol

    def test_plan_factorization_nonlog_mode(self):
        a, b, c = random_instance(7)
        cfg = SinkhornConfig(epsilon=5e-2, marginal_tol=1e-11, log_domain=False)
        res = sinkhorn(a, b, c, cfg)
        kernel = np.exp(-c / cfg.epsilon)
        reconstructed = res.u[:, None] * kernel * res.v[None, :]
        assert np.max(np.abs(reconstructed - res.plan.plan)) < 1e-10

    def test_against_exact_oracle_small_epsilon(self):
        for seed in range(10):
            a, b, c = random_instance(100 + seed)
            exact = exact_ot_small(a, b, c)
            res = sinkhorn(a, b, c, SinkhornConfig(epsilon=1e-3, marginal_tol=1e-8))
            assert abs(res.cost - exact) / exact < 0.01
            assert res.marginal_violation < 1e-8

    def test_epsilon_anneal_toward_exact(self):
        """Entropic cost approaches the exact optimum as epsilon shrinks."""
        rng = Rng(7008)
        x = rng.normal((5, 2))
        y = rng.normal((5, 2)) + 1.0
        a = np.full(5, 0.2)
        c = cost_matrix(x, y, 2.0)
        exact = exact_ot_small(a, a, c)
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3):
            res = sinkhorn(a, a, c, SinkhornConfig(epsilon=eps, marginal_tol=1e-6))
            gaps.append(res.cost - exact)
        assert gaps[0] > gaps[1] > gaps[2] >= -1e-9

    def test_cost_root_relation(self):
        a, b, c = random_instance(55)
        res = sinkhorn(a, b, c, SinkhornConfig(epsilon=1e-2, p=2.0))
        np.testing.assert_allclose(res.cost_root, res.cost**0.5, atol=1e-12)

    def test_nonconvergence_raises_with_violation(self):
        a, b, c = random_instance(42)
        with pytest.raises(ConvergenceError) as exc:
            sinkhorn(a, b, c, SinkhornConfig(epsilon=1e-3, marginal_tol=1e-12, max_iters=3))
        assert exc.value.violation > 0

    def test_zero_marginal_rejected(self):
        with pytest.raises(ContractError):
            sinkhorn([1.0, 0.0], [0.5, 0.5], np.ones((2, 2)), SinkhornConfig())


class TestExactOracle:
    def test_identical_distributions_zero(self):
        x = Rng(3).normal((4, 2))
        c = cost_matrix(x, x, 2.0)
        a = np.full(4, 0.25)
        assert abs(exact_ot_small(a, a, c)) < 1e-12

    def test_single_point_pair(self):
        assert abs(exact_ot_small([1.0], [1.0], [[3.7]]) - 3.7) < 1e-12

    def test_shifted_uniform_supports(self):
        # uniform on {0, 1} vs {1, 2} with |.|^1 cost: monotone coupling cost 1
        c = cost_matrix(np.array([[0.0], [1.0]]), np.array([[1.0], [2.0]]), 1.0)
        a = np.array([0.5, 0.5])
        assert abs(exact_ot_small(a, a, c) - 1.0) < 1e-12

    def test_matches_1d_monotone_closed_form(self):
        for seed in range(10):
            rng = Rng(200 + seed)
            n, m = int(rng.integers(2, 8)), int(rng.integers(2, 8))
            x = rng.normal((n,))
            y = rng.normal((m,))
            a = rng.uniform((n,), 0.5, 1.5)
            b = rng.uniform((m,), 0.5, 1.5)
            a, b = a / a.sum(), b / b.sum()
            lp = exact_ot_small(a, b, cost_matrix(x[:, None], y[:, None], 1.0))
            closed = wasserstein_1d(x, y, a, b, p=1.0)
            assert abs(lp - closed) < 1e-10

    def test_size_limit(self):
        with pytest.raises(ContractError):
            exact_ot_small(np.full(9, 1 / 9), np.full(9, 1 / 9), np.ones((9, 9)))


class TestLayerDiscrepancy:
    def test_identical_features_entropic_floor(self):
        feats = Rng(5).normal((8, 4))
        cfg = SinkhornConfig(epsilon=1e-2, marginal_tol=1e-9)
        res = layer_discrepancy(feats, feats.copy(), cfg)
        # with identical supports the plan cost is bounded by eps * log n
        assert 0.0 <= res.cost <= 1e-2 * np.log(8) + 1e-12

    def test_translation_ordering(self):
        """Cost grows with how far apart the two feature sets are pushed."""
        rng = Rng(6)
        feats = rng.normal((6, 3))
        cfg = SinkhornConfig(epsilon=1e-3, marginal_tol=1e-8)
        costs = []
        for offset in (0.5, 1.5, 3.0):
            res = layer_discrepancy(feats, feats + offset, cfg, normalization="none")
            exact = exact_ot_small(
                np.full(6, 1 / 6), np.full(6, 1 / 6), cost_matrix(feats, feats + offset, 2.0)
            )
            assert abs(res.cost - exact) / max(exact, 1e-12) < 0.02
            costs.append(res.cost)
        assert costs[0] < costs[1] < costs[2]

    def test_small_instance_matches_oracle_after_standardization(self):
        rng = Rng(8)
        a = rng.normal((4, 3))
        b = rng.normal((4, 3)) + 2.0
        cfg = SinkhornConfig(epsilon=1e-3, marginal_tol=1e-8)
        res = layer_discrepancy(a, b, cfg)
        stacked = np.concatenate([a, b])
        mu, sd = stacked.mean(0), stacked.std(0)
        c = cost_matrix((a - mu) / sd, (b - mu) / sd, 2.0)
        exact = exact_ot_small(np.full(4, 0.25), np.full(4, 0.25), c)
        assert abs(res.cost - exact) / exact < 0.01

    def test_requires_two_samples(self):
        with pytest.raises(ContractError):
            layer_discrepancy(np.zeros((1, 3)), np.zeros((4, 3)), SinkhornConfig())

    def test_unknown_normalization(self):
        with pytest.raises(ConfigError):
            layer_discrepancy(
                np.zeros((3, 2)), np.zeros((3, 2)), SinkhornConfig(), normalization="zscore"
            )
