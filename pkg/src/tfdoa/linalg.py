"""Small complex Hermitian eigendecomposition by cyclic Jacobi rotations.

All routines accept a single ``(M, M)`` matrix or a stack ``(..., M, M)``;
stacks are rotated together, one ``(p, q)`` pair at a time, which keeps the
per-frequency decompositions used by the DoA criteria cheap in numpy.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EigenBasis",
    "NonHermitianError",
    "eig_hermitian",
    "noise_subspace",
    "principal_eigvec",
    "vec_pseudoinverse",
]

HERMITIAN_TOL = 1e-8
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100


class NonHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvalues in ascending order with matching unit eigenvectors.

    ``eigenvectors[..., :, k]`` pairs with ``eigenvalues[..., k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[-1]


def _fix_phase(vecs):
    # largest-magnitude entry of every column made real nonnegative
    mags = np.abs(vecs)
    idx = np.argmax(mags, axis=-2)[..., None, :]
    pivot = np.take_along_axis(vecs, idx, axis=-2)
    pmag = np.abs(pivot)
    phase = np.where(pmag > 0, np.conj(pivot) / np.where(pmag > 0, pmag, 1.0), 1.0)
    out = vecs * phase
    np.put_along_axis(out, idx, pmag.astype(out.dtype), axis=-2)
    return out


def eig_hermitian(A, tol=OFFDIAG_TOL, max_sweeps=MAX_SWEEPS):
    """Eigendecomposition of Hermitian matrices by cyclic complex Jacobi.

    Parameters
    ----------
    A : array_like, shape (..., M, M)
        Hermitian up to ``1e-8 * max|A|``; symmetrized before rotating.
    tol : float
        Stop once the off-diagonal Frobenius norm of every matrix in the
        stack is at most ``tol * ||A||_F``.
    max_sweeps : int
        Upper bound on full sweeps over the ``(p, q)`` pairs.

    Returns
    -------
    EigenBasis
        Ascending eigenvalues; eigenvector phases fixed so that the
        largest-magnitude entry of each vector is real and nonnegative.
        Ties keep the order produced by the sweep (stable sort).
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    A = A.astype(np.complex128)
    amax = np.max(np.abs(A), axis=(-2, -1), keepdims=True)
    herm_err = np.max(np.abs(A - np.conj(np.swapaxes(A, -1, -2))), axis=(-2, -1), keepdims=True)
    if np.any(herm_err > HERMITIAN_TOL * amax):
        raise NonHermitianError(
            f"matrix is not Hermitian (max |A - A^H| = {float(np.max(herm_err)):.3e})")

    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    M = A.shape[-1]
    V = np.broadcast_to(np.eye(M, dtype=np.complex128), A.shape).copy()
    fro = np.linalg.norm(A, axis=(-2, -1))
    thresh = tol * fro
    offmask = ~np.eye(M, dtype=bool)

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(A[..., offmask]) ** 2, axis=-1))
        if np.all(off <= thresh):
            break
        for p in range(M - 1):
            for q in range(p + 1, M):
                _rotate(A, V, p, q)
    else:
        off = np.sqrt(np.sum(np.abs(A[..., offmask]) ** 2, axis=-1))
        if np.any(off > thresh):
            raise np.linalg.LinAlgError(
                f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.real(np.diagonal(A, axis1=-2, axis2=-1))
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[..., None, :], axis=-1)
    return EigenBasis(eigenvalues=w, eigenvectors=_fix_phase(V))


def _rotate(A, V, p, q):
    """Zero A[..., p, q] in place with a unitary rotation; accumulate into V."""
    apq = A[..., p, q]
    mag = np.abs(apq)
    app = np.real(A[..., p, p])
    aqq = np.real(A[..., q, q])
    # scale-aware skip: rotating negligible entries only adds rounding
    active = mag > 1e-300 + 1e-18 * (np.abs(app) + np.abs(aqq))
    safe = np.where(active, mag, 1.0)
    # after conj phase on q the 2x2 block is real symmetric [[app, mag], [mag, aqq]]
    theta = (aqq - app) / (2.0 * safe)
    t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(theta == 0.0, 1.0, t)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    eph = np.where(active, np.conj(apq) / safe, 1.0)  # e^{-i phi}
    c = np.where(active, c, 1.0)
    s = np.where(active, s, 0.0)

    # J = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on the (p, q) plane
    jpp = c[..., None]
    jpq = s[..., None]
    jqp = (-s * eph)[..., None]
    jqq = (c * eph)[..., None]

    colp = A[..., :, p].copy()
    colq = A[..., :, q]
    A[..., :, p] = colp * jpp + colq * jqp
    A[..., :, q] = colp * jpq + colq * jqq
    rowp = A[..., p, :].copy()
    rowq = A[..., q, :]
    A[..., p, :] = np.conj(jpp) * rowp + np.conj(jqp) * rowq
    A[..., q, :] = np.conj(jpq) * rowp + np.conj(jqq) * rowq
    A[..., p, q] = 0.0
    A[..., q, p] = 0.0
    A[..., p, p] = np.real(A[..., p, p])
    A[..., q, q] = np.real(A[..., q, q])

    vp = V[..., :, p].copy()
    vq = V[..., :, q]
    V[..., :, p] = vp * jpp + vq * jqp
    V[..., :, q] = vp * jpq + vq * jqq


def noise_subspace(basis: EigenBasis) -> np.ndarray:
    """Eigenvectors of the M-1 smallest eigenvalues, shape (..., M, M-1)."""
    if basis.size < 2:
        raise ValueError("noise subspace needs at least 2 microphones")
    return basis.eigenvectors[..., :, :-1]


def principal_eigvec(basis: EigenBasis) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue, shape (..., M)."""
    return basis.eigenvectors[..., :, -1]


def vec_pseudoinverse(v) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a column vector: ``v^H / ||v||^2``."""
    v = np.asarray(v, dtype=np.complex128)
    nrm2 = np.real(np.vdot(v, v))
    if nrm2 <= 0.0:
        raise ValueError("pseudoinverse of a zero vector")
    return np.conj(v) / nrm2
