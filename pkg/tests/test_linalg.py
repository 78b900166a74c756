import numpy as np
import pytest

from sirkit import DimensionMismatch, NotPositiveDefinite, RngStream
from sirkit.exceptions import DowndateFailure
from sirkit.linalg import (
    cholesky_downdate,
    cholesky_update,
    factor_psd,
    factor_spd,
    random_orthogonal,
    sample_chi,
    signed_triangularize,
    triangularize,
)


class TestFactorSpd:
    def test_identity(self):
        np.testing.assert_array_equal(factor_spd(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        np.testing.assert_allclose(factor_spd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_random_reconstruction(self, np_rng):
        A = np_rng.standard_normal((4, 4))
        P = A @ A.T + np.eye(4)
        S = factor_spd(P)
        assert np.allclose(S, np.tril(S))
        assert np.linalg.norm(S @ S.T - P) / np.linalg.norm(P) < 1e-10

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefinite):
            factor_spd(np.diag([1.0, -1.0]))

    def test_asymmetric_raises(self):
        with pytest.raises(ValueError, match="symmetric"):
            factor_spd(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_psd_fallback_handles_singular(self):
        v = np.array([1.0, 2.0, 3.0])
        S = factor_psd(np.outer(v, v))
        np.testing.assert_allclose(S @ S.T, np.outer(v, v), atol=1e-12)


class TestTriangularize:
    def test_triangular_input_is_kept(self, np_rng):
        L = np.tril(np_rng.standard_normal((4, 4)))
        L[np.diag_indices(4)] = np.abs(L[np.diag_indices(4)]) + 0.1
        np.testing.assert_allclose(triangularize(L), L, atol=1e-12)

    def test_stacked_identities(self):
        T = triangularize(np.hstack([np.eye(2), np.eye(2)]))
        np.testing.assert_allclose(T, np.sqrt(2.0) * np.eye(2), atol=1e-14)

    def test_gram_reconstruction(self, np_rng):
        M = np_rng.standard_normal((4, 18))
        T = triangularize(M)
        G = M @ M.T
        assert np.allclose(T, np.tril(T))
        assert np.all(np.diag(T) >= 0)
        assert np.linalg.norm(T @ T.T - G) / np.linalg.norm(G) < 1e-10

    def test_too_few_columns(self):
        with pytest.raises(DimensionMismatch):
            triangularize(np.ones((3, 2)))


class TestCholeskyUpDowndate:
    def test_update_then_downdate_roundtrip(self, np_rng):
        A = np_rng.standard_normal((3, 3))
        L = factor_spd(A @ A.T + np.eye(3))
        x = np_rng.standard_normal(3)
        L1 = cholesky_update(L, x)
        np.testing.assert_allclose(L1 @ L1.T, L @ L.T + np.outer(x, x), atol=1e-12)
        L2 = cholesky_downdate(L1, x)
        np.testing.assert_allclose(L2 @ L2.T, L @ L.T, atol=1e-10)

    def test_downdate_to_indefinite_fails(self):
        with pytest.raises(DowndateFailure):
            cholesky_downdate(np.eye(2), np.array([2.0, 0.0]))

    def test_signed_columns(self, np_rng):
        pos = np_rng.standard_normal((3, 6))
        neg = 0.1 * np_rng.standard_normal((3, 1))
        S = signed_triangularize(np.hstack([pos, neg]), np.array([1] * 6 + [-1]))
        np.testing.assert_allclose(S @ S.T, pos @ pos.T - neg @ neg.T, atol=1e-12)


class TestRandomOrthogonal:
    def test_scalar_is_sign(self):
        rng = RngStream(3)
        for _ in range(20):
            assert random_orthogonal(1, rng)[0, 0] in (-1.0, 1.0)

    def test_orthogonality(self):
        C = random_orthogonal(4, RngStream(5))
        assert np.linalg.norm(C @ C.T - np.eye(4)) < 1e-12

    def test_first_column_is_centered(self):
        rng = RngStream(7)
        draws = 100_000
        cols = np.array([random_orthogonal(3, rng)[:, 0] for _ in range(draws)])
        # each coordinate of a uniform unit vector in R^3 has variance 1/3
        sigma = np.sqrt(1.0 / 3.0 / draws)
        assert np.all(np.abs(cols.mean(axis=0)) < 3 * sigma)


class TestSampleChi:
    def test_positive(self):
        rng = RngStream(1)
        assert all(sample_chi(6, rng) > 0 for _ in range(100))

    def test_chi_square_moments(self):
        rng = RngStream(11)
        r2 = np.array([sample_chi(6, rng) ** 2 for _ in range(100_000)])
        assert abs(r2.mean() - 6.0) < 0.1
        assert abs(r2.var() - 12.0) < 0.5


class TestRngStream:
    def test_same_identifier_same_draws(self):
        a, b = RngStream(4, 2), RngStream(4, 2)
        np.testing.assert_array_equal(a.standard_normal(5), b.standard_normal(5))

    def test_substreams_differ(self):
        base = RngStream(4)
        assert not np.array_equal(base.substream(0).standard_normal(5), base.substream(1).standard_normal(5))

    def test_clone_continues_from_current_position(self):
        a = RngStream(9)
        a.standard_normal(3)
        b = a.clone()
        np.testing.assert_array_equal(a.standard_normal(4), b.standard_normal(4))
