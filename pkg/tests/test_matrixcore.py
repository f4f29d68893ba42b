import numpy as np
import pytest

from provisim.matrixcore import (
    SingularMatrixError,
    is_positive_definite,
    mat_inv,
    mat_mul,
    symmetrize,
    weighted_sq_norm,
)


class TestMatMul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(mat_mul(np.eye(2), m), m)

    def test_hand_product(self):
        out = mat_mul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]])
        assert np.array_equal(out, [[3.0], [7.0]])

    def test_scalar_case(self):
        assert mat_mul([[2.0]], [[3.0]])[0, 0] == 6.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mat_mul(np.ones((2, 3)), np.ones((2, 2)))

    def test_associativity_on_random_triples(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n, m, p, q = rng.integers(1, 5, size=4)
            a = rng.uniform(-1, 1, (n, m))
            b = rng.uniform(-1, 1, (m, p))
            c = rng.uniform(-1, 1, (p, q))
            left = mat_mul(mat_mul(a, b), c)
            right = mat_mul(a, mat_mul(b, c))
            assert np.max(np.abs(left - right)) < 1e-10


class TestMatInv:
    def test_identity(self):
        assert np.allclose(mat_inv(np.eye(2)), np.eye(2))

    def test_diagonal(self):
        out = mat_inv([[2.0, 0.0], [0.0, 4.0]])
        assert np.array_equal(out, [[0.5, 0.0], [0.0, 0.25]])

    def test_adjugate_by_hand(self):
        # det([[4,1],[1,3]]) = 11, adjugate [[3,-1],[-1,4]]
        out = mat_inv([[4.0, 1.0], [1.0, 3.0]])
        expected = np.array([[3.0, -1.0], [-1.0, 4.0]]) / 11.0
        assert np.max(np.abs(out - expected)) < 1e-15

    def test_product_is_identity(self):
        rng = np.random.default_rng(3)
        for n in (1, 2, 3, 5, 8):
            for _ in range(50):
                a = rng.uniform(-1, 1, (n, n)) + 2.0 * np.eye(n)
                assert np.max(np.abs(a @ mat_inv(a) - np.eye(n))) < 1e-10

    def test_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            a = rng.uniform(-1, 1, (2, 2)) + 2.0 * np.eye(2)
            assert np.max(np.abs(mat_inv(mat_inv(a)) - a)) < 1e-8

    def test_singular_carries_pivot(self):
        with pytest.raises(SingularMatrixError) as err:
            mat_inv([[1.0, 1.0], [1.0, 1.0]])
        assert err.value.pivot <= 1e-12

    def test_singular_3x3(self):
        a = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 0.0, 1.0]])
        with pytest.raises(SingularMatrixError):
            mat_inv(a)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            mat_inv(np.ones((2, 3)))

    def test_matches_reference_inverse(self):
        rng = np.random.default_rng(19)
        for n in (3, 4, 6, 8):
            a = rng.uniform(-1, 1, (n, n)) + n * np.eye(n)
            assert np.max(np.abs(mat_inv(a) - np.linalg.inv(a))) < 1e-10


class TestPositiveDefinite:
    def test_identity(self):
        assert is_positive_definite(np.eye(2))

    def test_indefinite(self):
        assert not is_positive_definite([[1.0, 0.0], [0.0, -1.0]])

    def test_minors_two_and_three(self):
        assert is_positive_definite([[2.0, 1.0], [1.0, 2.0]])

    def test_gram_plus_ridge(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            w = rng.uniform(-1, 1, (n, n))
            assert is_positive_definite(w.T @ w + 1e-9 * np.eye(n))

    def test_asymmetric_uses_symmetric_part(self):
        # symmetric part is [[1, 0], [0, 1]]
        assert is_positive_definite([[1.0, 5.0], [-5.0, 1.0]])

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            is_positive_definite(np.ones((2, 3)))


class TestWeightedSqNorm:
    def test_scalar(self):
        assert weighted_sq_norm([3.0], [[1.0]]) == 9.0

    def test_identity_weight(self):
        assert weighted_sq_norm([1.0, 1.0], np.eye(2)) == 2.0

    def test_diagonal_weight(self):
        assert weighted_sq_norm([1.0, 2.0], [[2.0, 0.0], [0.0, 1.0]]) == 6.0

    def test_nonnegative_for_psd(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            w = rng.uniform(-1, 1, (3, 3))
            m = w.T @ w
            x = rng.uniform(-10, 10, 3)
            assert weighted_sq_norm(x, m) >= -1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            weighted_sq_norm([1.0, 2.0, 3.0], np.eye(2))


def test_symmetrize():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    s = symmetrize(a)
    assert np.array_equal(s, s.T)
    assert s[0, 1] == 1.0
