import numpy as np
import pytest

from t4v.errors import (
    DegenerateRowError,
    DimensionError,
    NotPositiveDefiniteError,
    RankError,
)
from t4v.numkit import (
    RngState,
    cosine_rows,
    gaussian_matrix,
    l2_normalize_rows,
    qr_row_orthogonalize,
    solve_spd,
)


class TestGaussianMatrix:
    def test_deterministic_under_seed(self):
        a = gaussian_matrix(2, 2, RngState(7))
        b = gaussian_matrix(2, 2, RngState(7))
        np.testing.assert_array_equal(a, b)

    def test_single_scalar_shape(self):
        m = gaussian_matrix(1, 1, RngState(123))
        assert m.shape == (1, 1)
        assert np.isfinite(m).all()

    def test_moments_match_oracle_stream(self):
        # Oracle: drive numpy's Philox directly with the same seed discipline.
        m = gaussian_matrix(1000, 8, RngState(3))
        oracle = np.random.Generator(np.random.Philox(key=3)).standard_normal(
            (1000, 8), dtype=np.float64
        )
        np.testing.assert_array_equal(m, oracle)
        assert abs(m.mean()) < 0.05
        assert abs(m.var() - 1.0) < 0.1

    def test_zero_dimension_rejected(self):
        with pytest.raises(DimensionError):
            gaussian_matrix(0, 3, RngState(1))
        with pytest.raises(DimensionError):
            gaussian_matrix(3, 0, RngState(1))

    def test_child_streams_differ(self):
        root = RngState(11)
        a = gaussian_matrix(4, 4, root.child(0))
        b = gaussian_matrix(4, 4, root.child(1))
        assert not np.array_equal(a, b)


class TestQrRowOrthogonalize:
    def test_identity_is_fixed_point(self):
        q = qr_row_orthogonalize(np.eye(3))
        np.testing.assert_allclose(np.abs(q), np.eye(3), atol=1e-12)
        np.testing.assert_allclose(q @ q.T, np.eye(3), atol=1e-10)

    def test_gaussian_rows_orthonormal(self):
        m = gaussian_matrix(2, 4, RngState(5))
        q = qr_row_orthogonalize(m)
        assert abs(q[0] @ q[1]) < 1e-10
        assert abs(q[0] @ q[0] - 1.0) < 1e-10
        assert abs(q[1] @ q[1] - 1.0) < 1e-10

    def test_duplicate_rows_raise_rank_error(self):
        with pytest.raises(RankError):
            qr_row_orthogonalize(np.array([[1.0, 0.0], [1.0, 0.0]]))

    def test_gram_identity_property(self):
        for seed in range(8):
            r = 2 + seed % 5
            c = r + seed
            q = qr_row_orthogonalize(gaussian_matrix(r, c, RngState(seed)))
            np.testing.assert_allclose(q @ q.T, np.eye(r), atol=1e-10)

    def test_row_space_preserved(self):
        m = gaussian_matrix(3, 7, RngState(9))
        q = qr_row_orthogonalize(m)
        # every original row must be a combination of the output rows
        proj = m @ q.T @ q
        np.testing.assert_allclose(proj, m, atol=1e-10)

    def test_more_rows_than_cols_rejected(self):
        with pytest.raises(DimensionError):
            qr_row_orthogonalize(gaussian_matrix(4, 2, RngState(0)))

    def test_deterministic(self):
        m = gaussian_matrix(5, 8, RngState(42))
        np.testing.assert_array_equal(qr_row_orthogonalize(m), qr_row_orthogonalize(m))


def _gaussian_elimination_solve(a, b):
    """Naive partial-pivot elimination, independent of the Cholesky path."""
    a = a.astype(np.float64).copy()
    b = b.astype(np.float64).copy()
    n = a.shape[0]
    for col in range(n):
        piv = col + np.argmax(np.abs(a[col:, col]))
        a[[col, piv]] = a[[piv, col]]
        b[[col, piv]] = b[[piv, col]]
        for row in range(col + 1, n):
            f = a[row, col] / a[col, col]
            a[row, col:] -= f * a[col, col:]
            b[row] -= f * b[col]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


class TestSolveSpd:
    def test_identity_system(self):
        x = solve_spd(np.eye(2), np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(x, [[3.0], [4.0]], atol=1e-12)

    def test_diagonal_system(self):
        x = solve_spd(np.diag([2.0, 2.0]), np.array([[2.0], [4.0]]))
        np.testing.assert_allclose(x, [[1.0], [2.0]], atol=1e-12)

    def test_random_spd_matches_elimination_oracle(self):
        g = gaussian_matrix(4, 4, RngState(11))
        a = g.T @ g + np.eye(4)
        b = gaussian_matrix(4, 2, RngState(12))
        x = solve_spd(a, b)
        oracle = _gaussian_elimination_solve(a, b)
        assert np.abs(x - oracle).max() < 1e-8

    def test_residual_property(self):
        for seed in range(5):
            g = gaussian_matrix(6, 6, RngState(seed))
            a = g.T @ g + np.eye(6)
            b = gaussian_matrix(6, 3, RngState(seed + 100))
            x = solve_spd(a, b)
            resid = np.abs(a @ x - b).max()
            assert resid < 1e-8 * max(1.0, np.abs(b).max())

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefiniteError):
            solve_spd(np.array([[1.0, 0.0], [0.0, -1.0]]), np.eye(2))

    def test_asymmetric_rejected(self):
        with pytest.raises(NotPositiveDefiniteError):
            solve_spd(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(2))


class TestCosineRows:
    def test_orthonormal_rows(self):
        e = np.eye(2)
        np.testing.assert_allclose(cosine_rows(e, e), np.eye(2), atol=1e-15)

    def test_scale_invariance(self):
        out = cosine_rows(np.array([[2.0, 0.0]]), np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(out, [[1.0]], atol=1e-15)

    def test_45_degrees(self):
        out = cosine_rows(np.array([[1.0, 1.0]]), np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(out, [[np.sqrt(0.5)]], atol=1e-12)

    def test_self_map_unit_diagonal_and_symmetric(self):
        m = gaussian_matrix(6, 9, RngState(4))
        sim = cosine_rows(m, m)
        np.testing.assert_allclose(np.diag(sim), 1.0, atol=1e-12)
        np.testing.assert_allclose(sim, sim.T, atol=1e-12)
        assert sim.min() >= -1.0 and sim.max() <= 1.0

    def test_zero_row_rejected(self):
        with pytest.raises(DegenerateRowError):
            cosine_rows(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))

    def test_column_mismatch(self):
        with pytest.raises(DimensionError):
            cosine_rows(np.ones((1, 2)), np.ones((1, 3)))


class TestL2NormalizeRows:
    def test_three_four_five(self):
        out = l2_normalize_rows(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-15)

    def test_zero_row(self):
        with pytest.raises(DegenerateRowError):
            l2_normalize_rows(np.zeros((1, 3)))
