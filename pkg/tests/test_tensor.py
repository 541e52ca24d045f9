"""Multilinear kernel tests: layouts, round trips, and the MTTKRP identity."""

import numpy as np
import numpy.testing as npt
import pytest

from nsktr import (
    DenseTensor,
    KruskalModel,
    fold,
    inner_product,
    khatri_rao,
    khatri_rao_excluding,
    kruskal_inner_product,
    kruskal_reconstruct,
    matricize,
    mttkrp,
    unvec,
    vectorize,
)


def random_model(rng, dims, rank):
    return KruskalModel([rng.standard_normal((d, rank)) for d in dims])


def random_tensor(rng, dims):
    return DenseTensor(dims, rng.standard_normal(int(np.prod(dims))))


class TestDenseTensor:
    def test_flat_layout_is_column_major(self):
        t = DenseTensor((2, 2, 2), np.arange(1.0, 9.0))
        arr = t.to_array()
        assert arr[1, 0, 0] == 2.0
        assert arr[0, 1, 0] == 3.0
        assert arr[0, 0, 1] == 5.0

    def test_from_array_round_trip(self):
        rng = np.random.default_rng(0)
        arr = rng.standard_normal((3, 4, 2))
        t = DenseTensor.from_array(arr)
        npt.assert_array_equal(t.to_array(), arr)

    def test_validation(self):
        with pytest.raises(ValueError):
            DenseTensor((2, 0), [])
        with pytest.raises(ValueError):
            DenseTensor((2, 2), [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            DenseTensor((2,), [[1.0, 2.0]])


class TestMatricize:
    def test_mode0_hand_example(self):
        t = DenseTensor((2, 2, 2), np.arange(1.0, 9.0))
        npt.assert_array_equal(matricize(t, 0),
                               [[1, 3, 5, 7], [2, 4, 6, 8]])

    def test_all_modes_match_index_map(self):
        # column j of mode d enumerates the other indices, lowest mode fastest
        t = DenseTensor((2, 3, 2), np.arange(12.0))
        arr = t.to_array()
        for mode in range(3):
            m = matricize(t, mode)
            others = [d for d in range(3) if d != mode]
            for idx in np.ndindex(*t.dims):
                j = 0
                stride = 1
                for d in others:
                    j += idx[d] * stride
                    stride *= t.dims[d]
                assert m[idx[mode], j] == arr[idx]

    def test_one_way_tensor(self):
        t = DenseTensor((4,), [1.0, 2.0, 3.0, 4.0])
        npt.assert_array_equal(matricize(t, 0), [[1.0], [2.0], [3.0], [4.0]])

    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(1)
        t = random_tensor(rng, (6, 5, 4, 3))
        for mode in range(4):
            back = fold(matricize(t, mode), t.dims, mode)
            npt.assert_array_equal(back.values, t.values)

    def test_mode_out_of_range(self):
        t = DenseTensor((2, 2), np.zeros(4))
        with pytest.raises(ValueError):
            matricize(t, 2)
        with pytest.raises(ValueError):
            matricize(t, -1)


class TestVecUnvec:
    def test_column_stacking(self):
        npt.assert_array_equal(vectorize(np.array([[1.0, 2.0], [3.0, 4.0]])),
                               [1.0, 3.0, 2.0, 4.0])

    def test_unvec_inverse(self):
        npt.assert_array_equal(unvec([1.0, 3.0, 2.0, 4.0], 2, 2),
                               [[1.0, 2.0], [3.0, 4.0]])

    def test_round_trip_random(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            r, c = rng.integers(1, 7, size=2)
            v = rng.standard_normal(r * c)
            npt.assert_array_equal(vectorize(unvec(v, r, c)), v)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            unvec([1.0, 2.0, 3.0], 2, 2)


class TestKhatriRao:
    def test_hand_example(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        npt.assert_array_equal(khatri_rao(a, b),
                               [[5, 12], [7, 16], [15, 24], [21, 32]])

    def test_ones_row_is_identity(self):
        rng = np.random.default_rng(3)
        b = rng.standard_normal((4, 3))
        npt.assert_array_equal(khatri_rao(np.ones((1, 3)), b), b)

    def test_single_column_is_kron(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((3, 1))
        b = rng.standard_normal((5, 1))
        npt.assert_allclose(khatri_rao(a, b)[:, 0], np.kron(a[:, 0], b[:, 0]))

    def test_column_mismatch(self):
        with pytest.raises(ValueError):
            khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


class TestKhatriRaoExcluding:
    def test_two_way(self):
        rng = np.random.default_rng(5)
        m = random_model(rng, (3, 4), 2)
        npt.assert_array_equal(khatri_rao_excluding(m, 0), m.factors[1])
        npt.assert_array_equal(khatri_rao_excluding(m, 1), m.factors[0])

    def test_three_way_middle_mode(self):
        rng = np.random.default_rng(6)
        m = random_model(rng, (2, 3, 4), 2)
        npt.assert_allclose(khatri_rao_excluding(m, 1),
                            khatri_rao(m.factors[2], m.factors[0]))

    def test_columns_match_kron_chain(self):
        # column r is the Kronecker chain of the r-th factor columns,
        # highest mode first
        rng = np.random.default_rng(7)
        m = random_model(rng, (2, 3, 2, 4), 3)
        for mode in range(4):
            out = khatri_rao_excluding(m, mode)
            others = [d for d in range(4) if d != mode]
            for r in range(3):
                col = np.ones(1)
                for d in reversed(others):
                    col = np.kron(col, m.factors[d][:, r])
                npt.assert_allclose(out[:, r], col, atol=1e-13)


class TestMttkrp:
    def test_rank1_all_ones_gives_row_sums(self):
        rng = np.random.default_rng(8)
        t = random_tensor(rng, (3, 4, 5))
        m = KruskalModel([np.ones((d, 1)) for d in t.dims])
        for mode in range(3):
            npt.assert_allclose(mttkrp(t, m, mode)[:, 0],
                                matricize(t, mode).sum(axis=1), atol=1e-12)

    def test_matches_naive_product(self):
        rng = np.random.default_rng(9)
        t = random_tensor(rng, (3, 4, 5))
        m = random_model(rng, t.dims, 2)
        for mode in range(3):
            naive = matricize(t, mode) @ khatri_rao_excluding(m, mode)
            fused = mttkrp(t, m, mode)
            npt.assert_allclose(fused, naive, rtol=1e-12, atol=1e-12)

    def test_four_way_matches_naive(self):
        rng = np.random.default_rng(10)
        t = random_tensor(rng, (3, 2, 4, 3))
        m = random_model(rng, t.dims, 3)
        for mode in range(4):
            naive = matricize(t, mode) @ khatri_rao_excluding(m, mode)
            npt.assert_allclose(mttkrp(t, m, mode), naive, rtol=1e-12, atol=1e-12)

    def test_zero_tensor(self):
        rng = np.random.default_rng(11)
        t = DenseTensor((3, 4), np.zeros(12))
        m = random_model(rng, (3, 4), 2)
        npt.assert_array_equal(mttkrp(t, m, 0), np.zeros((3, 2)))

    def test_dims_mismatch(self):
        rng = np.random.default_rng(12)
        t = random_tensor(rng, (3, 4))
        m = random_model(rng, (3, 5), 2)
        with pytest.raises(ValueError):
            mttkrp(t, m, 0)


class TestKruskalReconstruct:
    def test_rank1_outer_product(self):
        m = KruskalModel([np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]])])
        npt.assert_array_equal(kruskal_reconstruct(m).to_array(),
                               [[3.0, 4.0], [6.0, 8.0]])

    def test_zero_factor_gives_zero_tensor(self):
        rng = np.random.default_rng(13)
        m = random_model(rng, (3, 4, 2), 2)
        m.factors[1][:] = 0.0
        assert kruskal_reconstruct(m).norm() == 0.0

    def test_matricized_identity(self):
        rng = np.random.default_rng(14)
        m = random_model(rng, (3, 4, 5), 3)
        full = kruskal_reconstruct(m)
        for mode in range(3):
            expect = m.factors[mode] @ khatri_rao_excluding(m, mode).T
            npt.assert_allclose(matricize(full, mode), expect,
                                rtol=1e-12, atol=1e-12)


class TestInnerProducts:
    def test_self_inner_product_is_squared_norm(self):
        rng = np.random.default_rng(15)
        t = random_tensor(rng, (4, 3, 2))
        npt.assert_allclose(inner_product(t, t), t.norm() ** 2, rtol=1e-12)

    def test_zero(self):
        rng = np.random.default_rng(16)
        t = random_tensor(rng, (4, 3))
        z = DenseTensor(t.dims, np.zeros(t.size))
        assert inner_product(t, z) == 0.0

    def test_matches_matricized_inner_product(self):
        rng = np.random.default_rng(17)
        a = random_tensor(rng, (3, 4, 2))
        b = random_tensor(rng, (3, 4, 2))
        ref = inner_product(a, b)
        for mode in range(3):
            val = float(np.sum(matricize(a, mode) * matricize(b, mode)))
            npt.assert_allclose(val, ref, rtol=1e-12)

    def test_dims_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(DenseTensor((2,), [1.0, 2.0]),
                          DenseTensor((3,), [1.0, 2.0, 3.0]))


class TestKruskalInnerProduct:
    def test_matches_dense_oracle_all_modes(self):
        rng = np.random.default_rng(18)
        t = random_tensor(rng, (3, 4, 5))
        m = random_model(rng, t.dims, 2)
        ref = inner_product(t, kruskal_reconstruct(m))
        for mode in range(3):
            val = kruskal_inner_product(t, m, mode)
            assert abs(val - ref) <= 1e-10 * (1 + abs(ref))

    def test_zero_factors(self):
        rng = np.random.default_rng(19)
        t = random_tensor(rng, (3, 4))
        m = KruskalModel([np.zeros((3, 2)), np.zeros((4, 2))])
        assert kruskal_inner_product(t, m, 0) == 0.0

    def test_rank1_two_way_bilinear_form(self):
        rng = np.random.default_rng(20)
        t = random_tensor(rng, (4, 5))
        b1 = rng.standard_normal((4, 1))
        b2 = rng.standard_normal((5, 1))
        m = KruskalModel([b1, b2])
        expect = float(b1[:, 0] @ t.to_array() @ b2[:, 0])
        npt.assert_allclose(kruskal_inner_product(t, m, 1), expect, rtol=1e-12)

    def test_identity_on_many_random_triples(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            nd = int(rng.integers(2, 5))
            dims = tuple(int(d) for d in rng.integers(2, 7, size=nd))
            rank = int(rng.integers(1, 4))
            t = random_tensor(rng, dims)
            m = random_model(rng, dims, rank)
            mode = int(rng.integers(nd))
            ref = inner_product(t, kruskal_reconstruct(m))
            val = kruskal_inner_product(t, m, mode)
            assert abs(val - ref) <= 1e-10 * (1 + abs(ref))
