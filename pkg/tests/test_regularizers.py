"""Penalty and proximal-operator tests."""

import numpy as np
import numpy.testing as npt
import pytest

from nsktr import (
    DifferenceOperator,
    ModeRegConfig,
    apply_diff,
    apply_diff_transpose,
    penalty_value,
    project_nonneg,
    soft_threshold,
)


class TestModeRegConfig:
    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            ModeRegConfig(lambda1=-1.0)

    def test_presets(self):
        assert ModeRegConfig.lasso(2.0) == ModeRegConfig(lambda1=2.0)
        assert ModeRegConfig.lasso(2.0, nonneg=True) == ModeRegConfig(2.0, 0, 0, True)
        assert ModeRegConfig.total_variation(3.0) == ModeRegConfig(lambda2=3.0)
        assert ModeRegConfig.fused_lasso(1.0, 2.0) == ModeRegConfig(1.0, 2.0, 0.0)
        assert ModeRegConfig.fused_lasso(1.0, 2.0, nonneg=True).nonneg
        assert ModeRegConfig.elastic_net(1.0, 4.0) == ModeRegConfig(1.0, 0.0, 4.0)
        assert ModeRegConfig.elastic_net(1.0, 4.0).lambda2 == 0.0


class TestDifferenceOperator:
    def test_hand_example(self):
        op = DifferenceOperator(4, 1)
        npt.assert_array_equal(op.apply([1.0, 2.0, 4.0, 7.0]), [1.0, 2.0, 3.0])

    def test_constant_vector_maps_to_zero(self):
        op = DifferenceOperator(5, 2)
        npt.assert_array_equal(op.apply(np.full(10, 3.1)), np.zeros(8))

    def test_no_cross_column_differences(self):
        op = DifferenceOperator(2, 2)
        npt.assert_array_equal(op.apply([1.0, 2.0, 10.0, 10.0]), [1.0, 0.0])

    def test_column_support_preserved(self):
        rng = np.random.default_rng(0)
        op = DifferenceOperator(5, 3)
        for col in range(3):
            v = np.zeros(15)
            v[col * 5:(col + 1) * 5] = rng.standard_normal(5)
            out = op.apply(v)
            mask = np.zeros(12, dtype=bool)
            mask[col * 4:(col + 1) * 4] = True
            assert np.all(out[~mask] == 0.0)

    def test_transpose_hand_example(self):
        op = DifferenceOperator(3, 1)
        npt.assert_array_equal(op.apply_transpose([1.0, 0.0]), [-1.0, 1.0, 0.0])

    def test_transpose_zero(self):
        op = DifferenceOperator(4, 2)
        npt.assert_array_equal(op.apply_transpose(np.zeros(6)), np.zeros(8))

    def test_adjoint_identity(self):
        rng = np.random.default_rng(1)
        op = DifferenceOperator(6, 2)
        for _ in range(50):
            v = rng.standard_normal(op.in_dim)
            w = rng.standard_normal(op.out_dim)
            lhs = float(op.apply(v) @ w)
            rhs = float(v @ op.apply_transpose(w))
            assert abs(lhs - rhs) <= 1e-14 * max(1.0, abs(lhs))

    def test_matches_dense_materialization(self):
        rng = np.random.default_rng(2)
        for size, rank in [(2, 1), (5, 2), (4, 3), (1, 2)]:
            op = DifferenceOperator(size, rank)
            dense = op.materialize()
            assert dense.shape == (op.out_dim, op.in_dim)
            v = rng.standard_normal(op.in_dim)
            w = rng.standard_normal(op.out_dim)
            npt.assert_allclose(op.apply(v), dense @ v, atol=1e-14)
            npt.assert_allclose(op.apply_transpose(w), dense.T @ w, atol=1e-14)
            npt.assert_allclose(op.gram(), dense.T @ dense, atol=1e-14)

    def test_functional_aliases(self):
        op = DifferenceOperator(3, 1)
        v = np.array([1.0, 4.0, 9.0])
        npt.assert_array_equal(apply_diff(op, v), op.apply(v))
        npt.assert_array_equal(apply_diff_transpose(op, [1.0, 1.0]),
                               op.apply_transpose([1.0, 1.0]))

    def test_length_mismatch(self):
        op = DifferenceOperator(3, 1)
        with pytest.raises(ValueError):
            op.apply([1.0, 2.0])
        with pytest.raises(ValueError):
            op.apply_transpose([1.0, 2.0, 3.0])


class TestSoftThreshold:
    def test_hand_example(self):
        npt.assert_array_equal(soft_threshold([3.0, -3.0, 0.5], 1.0),
                               [2.0, -2.0, 0.0])

    def test_zero_threshold_is_identity(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal(10)
        npt.assert_array_equal(soft_threshold(v, 0.0), v)

    def test_minimizes_scalar_objective_on_grid(self):
        # each output coordinate beats a dense grid on b*|z| + (z-v)^2/2
        rng = np.random.default_rng(4)
        for _ in range(20):
            v = float(rng.standard_normal() * 3)
            beta = float(rng.uniform(0, 2))
            z_star = soft_threshold(np.array([v]), beta)[0]
            grid = np.arange(-6.0, 6.0, 1e-3)
            obj = beta * np.abs(grid) + 0.5 * (grid - v) ** 2
            best = beta * abs(z_star) + 0.5 * (z_star - v) ** 2
            assert best <= obj.min() + 1e-9

    def test_contraction(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            u = rng.standard_normal(8)
            v = rng.standard_normal(8)
            beta = float(rng.uniform(0, 3))
            lhs = np.linalg.norm(soft_threshold(u, beta) - soft_threshold(v, beta))
            assert lhs <= np.linalg.norm(u - v) + 1e-14

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold([1.0], -0.5)


class TestProjectNonneg:
    def test_hand_example(self):
        npt.assert_array_equal(project_nonneg([-1.0, 2.0]), [0.0, 2.0])

    def test_nonnegative_input_unchanged(self):
        v = np.array([0.0, 1.5, 3.0])
        npt.assert_array_equal(project_nonneg(v), v)

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        v = rng.standard_normal(12)
        once = project_nonneg(v)
        npt.assert_array_equal(project_nonneg(once), once)


class TestPenaltyValue:
    def test_l1_only(self):
        op = DifferenceOperator(2, 1)
        cfg = ModeRegConfig(lambda1=1.0)
        assert penalty_value([1.0, -1.0], cfg, op) == 2.0

    def test_nonneg_violation_is_infinite(self):
        op = DifferenceOperator(2, 1)
        cfg = ModeRegConfig(lambda1=1.0, nonneg=True)
        assert penalty_value([1.0, -1.0], cfg, op) == np.inf

    def test_hand_example_all_terms(self):
        # l1 = 7, TV = 3, ridge = (2/2)*21 = 21
        op = DifferenceOperator(3, 1)
        cfg = ModeRegConfig(1.0, 1.0, 2.0)
        assert penalty_value([1.0, 2.0, 4.0], cfg, op) == 31.0

    def test_zero_config_is_zero(self):
        rng = np.random.default_rng(7)
        op = DifferenceOperator(4, 2)
        cfg = ModeRegConfig()
        assert penalty_value(rng.standard_normal(8), cfg, op) == 0.0

    def test_length_mismatch(self):
        op = DifferenceOperator(3, 1)
        with pytest.raises(ValueError):
            penalty_value([1.0, 2.0], ModeRegConfig(), op)
