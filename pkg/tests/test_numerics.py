import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sifo.errors import ConvergenceError, NumericalError, RankDeficientError
from sifo.numerics import (hermitian_eig, is_projector, jacobi_eigh, orthonormalize, power_iteration_topq,
                           projector_from_basis, random_hermitian, random_psd, spectral_norm)
from sifo.probing import dft_codebook


def _rel_recon(a, e):
    v, w = e.eigenvectors, e.eigenvalues
    return np.linalg.norm(v @ np.diag(w) @ v.conj().T - a) / np.linalg.norm(a)


class TestHermitianEig:
    def test_identity_2x2(self):
        e = hermitian_eig(np.eye(2))
        np.testing.assert_allclose(e.eigenvalues, [1, 1], atol=1e-15)
        np.testing.assert_allclose(e.eigenvectors.conj().T @ e.eigenvectors, np.eye(2), atol=1e-12)

    def test_diag_3_1(self):
        e = hermitian_eig(np.diag([1.0, 3.0]))
        np.testing.assert_allclose(e.eigenvalues, [3, 1])
        np.testing.assert_allclose(np.abs(e.eigenvectors), [[0, 1], [1, 0]], atol=1e-15)

    def test_random_8x8_reconstruction(self):
        a = random_hermitian(8, np.random.default_rng(8))
        assert _rel_recon(a, hermitian_eig(a)) <= 1e-8

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 16, 33, 64])
    def test_sizes_match_lapack_eigenvalues(self, n):
        a = random_hermitian(n, np.random.default_rng(n))
        e = hermitian_eig(a)
        np.testing.assert_allclose(e.eigenvalues, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-10)
        np.testing.assert_allclose(e.eigenvectors.conj().T @ e.eigenvectors, np.eye(n), atol=1e-10)
        assert _rel_recon(a, e) <= 1e-8

    def test_descending_and_trace(self):
        a = random_hermitian(12, np.random.default_rng(3))
        w = hermitian_eig(a).eigenvalues
        assert np.all(np.diff(w) <= 0)
        assert abs(w.sum() - np.trace(a).real) <= 1e-8

    def test_phase_convention(self):
        v = hermitian_eig(random_hermitian(10, np.random.default_rng(4))).eigenvectors
        piv = v[np.argmax(np.abs(v), axis=0), np.arange(10)]
        assert np.all(np.abs(piv.imag) <= 1e-14) and np.all(piv.real > 0)

    def test_lapack_backend_same_contract(self):
        a = random_hermitian(20, np.random.default_rng(5))
        e1, e2 = hermitian_eig(a), hermitian_eig(a, method="lapack")
        np.testing.assert_allclose(e1.eigenvalues, e2.eigenvalues, atol=1e-10)
        np.testing.assert_allclose(e1.eigenvectors, e2.eigenvectors, atol=1e-8)

    def test_symmetrizes_input(self):
        a = random_hermitian(6, np.random.default_rng(6))
        skew = 1e-13 * (np.triu(np.ones((6, 6)), 1))
        e = hermitian_eig(a + skew)
        assert _rel_recon(a, e) <= 1e-8

    def test_zero_matrix(self):
        e = hermitian_eig(np.zeros((3, 3)))
        np.testing.assert_array_equal(e.eigenvalues, 0)

    def test_repeated_eigenvalues(self):
        u = dft_codebook(6).beams
        a = u @ np.diag([2, 2, 2, 1, 1, 0]) @ u.conj().T
        e = hermitian_eig(a)
        np.testing.assert_allclose(e.eigenvalues, [2, 2, 2, 1, 1, 0], atol=1e-12)
        assert _rel_recon(a, e) <= 1e-8

    def test_non_square(self):
        with pytest.raises(ValueError):
            hermitian_eig(np.zeros((2, 3)))

    def test_non_finite(self):
        with pytest.raises(NumericalError):
            hermitian_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            hermitian_eig(np.eye(2), method="qr")

    def test_jacobi_sweep_cap(self):
        with pytest.raises(ConvergenceError):
            jacobi_eigh(random_hermitian(8, np.random.default_rng(0)), max_sweeps=1)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 24), st.integers(0, 2**32 - 1))
    def test_property_reconstruction(self, n, seed):
        a = random_hermitian(n, np.random.default_rng(seed))
        e = hermitian_eig(a)
        assert _rel_recon(a, e) <= 1e-8
        assert abs(e.eigenvalues.sum() - np.trace(a).real) <= 1e-8 * max(1.0, np.linalg.norm(a))


class TestOrthonormalize:
    def test_dft_unchanged_up_to_phase(self):
        d = dft_codebook(8).beams[:, :3]
        q = orthonormalize(d)
        np.testing.assert_allclose(np.abs(np.sum(q.conj() * d, axis=0)), 1.0, atol=1e-12)

    def test_parallel_columns(self):
        v = np.arange(1, 5, dtype=complex)
        with pytest.raises(RankDeficientError):
            orthonormalize(np.column_stack([v, 2j * v]))

    def test_span_preserved_random_16x4(self):
        rng = np.random.default_rng(16)
        u = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
        q = orthonormalize(u)
        np.testing.assert_allclose(q.conj().T @ q, np.eye(4), atol=1e-10)
        assert np.linalg.norm(q @ q.conj().T - projector_from_basis(u)) <= 1e-9

    def test_zero_column(self):
        with pytest.raises(RankDeficientError):
            orthonormalize(np.zeros((4, 1)))

    def test_too_many_columns(self):
        with pytest.raises(RankDeficientError):
            orthonormalize(np.random.default_rng(0).standard_normal((3, 4)))

    def test_near_dependent_scaled_columns(self):
        # column scaling must not mask dependence
        v = np.array([1.0, 0, 0, 0])
        w = np.array([1.0, 1e-12, 0, 0]) * 1e6
        with pytest.raises(RankDeficientError):
            orthonormalize(np.column_stack([v, w]))


class TestProjector:
    def test_e1(self):
        p = projector_from_basis(np.eye(5)[:, :1])
        np.testing.assert_allclose(p, np.diag([1, 0, 0, 0, 0]), atol=1e-15)

    def test_unitary_gives_identity(self):
        np.testing.assert_allclose(projector_from_basis(dft_codebook(8).beams), np.eye(8), atol=1e-12)

    def test_non_orthogonal_matches_orthonormalized(self):
        rng = np.random.default_rng(1)
        u = rng.standard_normal((10, 3)) + 1j * rng.standard_normal((10, 3))
        p = projector_from_basis(u)
        q = orthonormalize(u)
        assert is_projector(p, 3)
        np.testing.assert_allclose(p, q @ q.conj().T, atol=1e-9)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficientError):
            projector_from_basis(np.ones((4, 2)))

    def test_is_projector_rejects(self):
        assert not is_projector(np.diag([1.0, 0.5]))
        assert not is_projector(np.array([[0, 1], [0, 0]]))
        assert not is_projector(np.eye(2), q=1)


class TestPowerIteration:
    def test_diag(self):
        x = power_iteration_topq(np.diag([4.0, 3, 2, 1]), 2)
        np.testing.assert_allclose(x @ x.conj().T, np.diag([1, 1, 0, 0]), atol=1e-6)

    def test_rank_one(self):
        h = np.array([1, 1j, -1, 2])
        x = power_iteration_topq(np.outer(h, h.conj()), 1)
        assert abs(abs(np.vdot(x[:, 0], h)) - np.linalg.norm(h)) <= 1e-9

    def test_random_psd_matches_eig(self):
        a = random_psd(16, np.random.default_rng(2))
        x = power_iteration_topq(a, 2)
        u = hermitian_eig(a).top(2)
        assert np.linalg.norm(x @ x.conj().T - u @ u.conj().T) <= 1e-6

    def test_cross_solver_100(self):
        rng = np.random.default_rng(100)
        done = 0
        while done < 100:
            a = random_psd(8, rng)
            w = np.linalg.eigvalsh(a)[::-1]
            if w[1] - w[2] < 1e-2 * w[0]:
                continue  # gap condition
            x = power_iteration_topq(a, 2)
            u = hermitian_eig(a).top(2)
            assert np.linalg.norm(x @ x.conj().T - u @ u.conj().T) <= 1e-6
            done += 1

    def test_cap(self):
        # equal top eigenvalues in a rotating pair never converge in one step budget
        a = np.diag([1.0, 0.999999999, 0.5])
        with pytest.raises(ConvergenceError):
            power_iteration_topq(a, 1, tol=1e-15, max_iter=5)

    def test_bad_q(self):
        with pytest.raises(ValueError):
            power_iteration_topq(np.eye(3), 4)


def test_spectral_norm():
    assert spectral_norm(np.diag([1.0, -3.0, 2.0])) == pytest.approx(3.0)
