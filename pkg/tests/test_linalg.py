import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tfdoa.linalg import (NonHermitianError, eig_hermitian, noise_subspace, principal_eigvec,
                          vec_pseudoinverse)


def random_hermitian(rng, m, batch=()):
    X = rng.standard_normal(batch + (m, m)) + 1j * rng.standard_normal(batch + (m, m))
    return X + np.conj(np.swapaxes(X, -1, -2))


def test_identity():
    b = eig_hermitian(np.eye(9))
    np.testing.assert_array_equal(b.eigenvalues, np.ones(9))


def test_diag_ascending():
    b = eig_hermitian(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(b.eigenvalues, [1.0, 3.0])
    np.testing.assert_allclose(np.abs(b.eigenvectors), [[0, 1], [1, 0]])


def test_residual_and_orthonormality_batch():
    rng = np.random.default_rng(0)
    A = random_hermitian(rng, 9, (200,))
    b = eig_hermitian(A)
    V, L = b.eigenvectors, b.eigenvalues
    fro = np.linalg.norm(A, axis=(-2, -1))
    res = np.linalg.norm(A @ V - V * L[:, None, :], axis=(-2, -1))
    assert np.all(res <= 1e-10 * fro)
    orth = np.linalg.norm(np.conj(np.swapaxes(V, -1, -2)) @ V - np.eye(9), axis=(-2, -1))
    assert np.all(orth <= 1e-10)
    assert np.all(np.diff(L, axis=-1) >= 0)


def test_matches_lapack_eigenvalues():
    rng = np.random.default_rng(1)
    A = random_hermitian(rng, 6, (50,))
    np.testing.assert_allclose(eig_hermitian(A).eigenvalues, np.linalg.eigvalsh(A), atol=1e-12)


def test_reconstruction_and_psd():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((30, 5, 3)) + 1j * rng.standard_normal((30, 5, 3))
    A = X @ np.conj(np.swapaxes(X, -1, -2))  # rank 3, PSD
    b = eig_hermitian(A)
    V, L = b.eigenvectors, b.eigenvalues
    rec = (V * L[:, None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    fro = np.linalg.norm(A, axis=(-2, -1))
    assert np.all(np.linalg.norm(rec - A, axis=(-2, -1)) <= 1e-10 * fro)
    assert np.all(L >= -1e-10 * fro[:, None])


def test_deterministic():
    rng = np.random.default_rng(3)
    A = random_hermitian(rng, 9)
    a, b = eig_hermitian(A), eig_hermitian(A.copy())
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_phase_convention():
    rng = np.random.default_rng(4)
    V = eig_hermitian(random_hermitian(rng, 7)).eigenvectors
    for k in range(7):
        col = V[:, k]
        piv = col[np.argmax(np.abs(col))]
        assert piv.real >= 0 and piv.imag == 0.0


def test_rejects_non_hermitian():
    with pytest.raises(NonHermitianError):
        eig_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_rejects_nonfinite():
    with pytest.raises(ValueError):
        eig_hermitian(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_tolerates_tiny_asymmetry():
    A = np.array([[2.0, 1.0 + 1e-10j], [1.0, 3.0]], dtype=complex)
    b = eig_hermitian(A)
    np.testing.assert_allclose(b.eigenvalues, np.linalg.eigvalsh(0.5 * (A + A.conj().T)))


def test_noise_subspace_orthogonal_to_rank_one():
    rng = np.random.default_rng(5)
    M = 9
    v = np.exp(2j * np.pi * rng.random(M))  # ||v||^2 = M
    N = noise_subspace(eig_hermitian(np.outer(v, v.conj())))
    assert N.shape == (M, M - 1)
    assert np.max(np.abs(v.conj() @ N)) <= 1e-9 * np.sqrt(M)


def test_noise_subspace_diag():
    N = noise_subspace(eig_hermitian(np.diag([0.0, 0.0, 5.0])))
    P = N @ N.conj().T
    np.testing.assert_allclose(P, np.diag([1.0, 1.0, 0.0]), atol=1e-15)


def test_noise_subspace_needs_two_mics():
    with pytest.raises(ValueError):
        noise_subspace(eig_hermitian(np.array([[2.0]])))


def test_principal_rank_one():
    rng = np.random.default_rng(6)
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    p = principal_eigvec(eig_hermitian(np.outer(v, v.conj())))
    u = v / np.linalg.norm(v)
    k = np.argmax(np.abs(u))
    u = u * np.conj(u[k]) / abs(u[k])
    np.testing.assert_allclose(p, u, atol=1e-12)
    assert np.isclose(np.linalg.norm(p), 1.0)


def test_principal_diag_and_degenerate():
    np.testing.assert_allclose(principal_eigvec(eig_hermitian(np.diag([1.0, 4.0]))), [0, 1])
    p1 = principal_eigvec(eig_hermitian(np.eye(3)))
    p2 = principal_eigvec(eig_hermitian(np.eye(3)))
    assert np.array_equal(p1, p2)
    assert np.isclose(np.linalg.norm(p1), 1.0)


def test_pseudoinverse():
    u = np.array([0.6, 0.8j])
    np.testing.assert_allclose(vec_pseudoinverse(u), u.conj())
    np.testing.assert_allclose(vec_pseudoinverse([2.0, 0.0]), [0.5, 0.0])
    rng = np.random.default_rng(7)
    v = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    assert abs(vec_pseudoinverse(v) @ v - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        vec_pseudoinverse(np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.floats(1e-6, 1e6))
def test_eigenpairs_property(m, seed, scale):
    A = scale * random_hermitian(np.random.default_rng(seed), m)
    b = eig_hermitian(A)
    V, L = b.eigenvectors, b.eigenvalues
    fro = np.linalg.norm(A)
    assert np.linalg.norm(A @ V - V * L) <= 1e-10 * fro
    assert np.linalg.norm(V.conj().T @ V - np.eye(m)) <= 1e-10
