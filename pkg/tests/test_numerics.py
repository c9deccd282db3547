import numpy as np
import pytest

from dccaret_cli import cca
from dccaret_cli import numerics
from dccaret_cli.errors import DimensionError, NotPositiveDefiniteError, NumericError, PreconditionError


def _random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * np.linspace(1.0, cond, n)) @ q.T


class TestSymEig:

    def test_known_pair(self):
        eig = numerics.sym_eig([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(eig.eigenvalues, [3.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(np.abs(eig.eigenvectors), np.full((2, 2), np.sqrt(0.5)), atol=1e-14)

    def test_reconstruction_and_orthonormality(self, rng):
        for _ in range(10):
            a = rng.standard_normal((7, 7))
            a = a + a.T
            eig = numerics.sym_eig(a)
            np.testing.assert_allclose(eig.reconstruct(), a, atol=1e-12)
            np.testing.assert_allclose(eig.eigenvectors.T @ eig.eigenvectors, np.eye(7), atol=1e-12)
            assert np.all(np.diff(eig.eigenvalues) <= 0)

    def test_sign_convention(self, rng):
        a = rng.standard_normal((6, 6))
        q = numerics.sym_eig(a + a.T).eigenvectors
        largest = q[np.argmax(np.abs(q), axis=0), np.arange(6)]
        assert np.all(largest >= 0)

    def test_identity(self):
        eig = numerics.sym_eig(np.eye(4))
        np.testing.assert_allclose(eig.eigenvalues, np.ones(4))

    def test_rejects_asymmetric(self):
        with pytest.raises(PreconditionError):
            numerics.sym_eig([[1.0, 2.0], [0.0, 1.0]])

    def test_rejects_non_square(self):
        with pytest.raises(DimensionError):
            numerics.sym_eig(np.zeros((2, 3)))

    def test_rejects_nan(self):
        with pytest.raises(NumericError):
            numerics.sym_eig([[np.nan, 0.0], [0.0, 1.0]])


class TestInvSqrtSpd:

    def test_whitens(self, rng):
        a = _random_spd(rng, 5, cond=100.0)
        s = numerics.inv_sqrt_spd(a)
        np.testing.assert_allclose(s @ a @ s, np.eye(5), atol=1e-10)
        np.testing.assert_allclose(s, s.T, atol=0)

    def test_diagonal(self):
        np.testing.assert_allclose(numerics.inv_sqrt_spd(np.diag([4.0, 9.0])), np.diag([0.5, 1.0 / 3.0]))

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            numerics.inv_sqrt_spd(np.diag([1.0, -1.0]))

    def test_floor_must_be_positive(self):
        with pytest.raises(PreconditionError):
            numerics.inv_sqrt_spd(np.eye(2), floor=0.0)


class TestSvd:

    @pytest.mark.parametrize('shape', [(5, 5), (7, 3), (3, 7)])
    def test_reconstruction(self, rng, shape):
        a = rng.standard_normal(shape)
        u, d, v = numerics.svd(a)
        np.testing.assert_allclose((u * d) @ v.T, a, atol=1e-12)
        assert np.all(d >= 0) and np.all(np.diff(d) <= 0)
        k = min(shape)
        np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-12)
        np.testing.assert_allclose(v.T @ v, np.eye(k), atol=1e-12)

    def test_trace_norm_matches_eigen_path(self, rng):
        for _ in range(50):
            t = rng.standard_normal((6, 6))
            w = numerics.sym_eig(t.T @ t).eigenvalues
            expected = float(np.sum(np.sqrt(np.maximum(w, 0.0))))
            assert abs(cca.total_correlation(t) - expected) < 1e-8

    @pytest.mark.parametrize('n', [1, 3, 8])
    def test_agrees_with_sym_eig_on_spd(self, rng, n):
        a = _random_spd(rng, n, cond=50.0)
        u, d, v = numerics.svd(a)
        eig = numerics.sym_eig(a)
        np.testing.assert_allclose(d, eig.eigenvalues, atol=1e-10)
        np.testing.assert_allclose(u, eig.eigenvectors, atol=1e-8)
        np.testing.assert_allclose(v, eig.eigenvectors, atol=1e-8)

    def test_rejects_vector(self):
        with pytest.raises(DimensionError):
            numerics.svd(np.ones(3))
