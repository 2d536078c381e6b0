"""Weighted spatial covariance matrices and the four wideband DoA criteria.

Every criterion produces a pseudo-spectrum over the azimuth grid that is
maximized by a single global argmax (one target speaker):

* ``music``      sum_f 1 / (v^H N N^H v), N the M-1 smallest eigenvectors
* ``principal``  sum_f |v^H p|^2, p the principal eigenvector
* ``srp``        sum_f v^H Phi v
* ``proposed``   sum_f v^H R v with R built from snapshot-normalized,
  mask-filtered outer products

``matching_residuals`` evaluates the least-squares matching objective that the
``proposed`` spectrum maximizes, with the speech STFT eliminated in closed
form. It is kept independent of ``compute_norm_scm`` so the two can check
each other.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .array import AngleGrid, SteeringField
from .linalg import eig_hermitian, noise_subspace, principal_eigvec, vec_pseudoinverse
from .masks import MaskTensor
from .signals import SnapshotTensor

__all__ = [
    "METHODS",
    "Wscm",
    "NormScm",
    "SpatialSpectrum",
    "compute_wscm",
    "compute_norm_scm",
    "spectrum_music",
    "spectrum_principal",
    "spectrum_srp",
    "spectrum_proposed",
    "matching_residual",
    "matching_residuals",
    "estimate_doa",
    "compute_spectrum",
    "write_spectrum_csv",
]

METHODS = ("music", "principal", "srp", "proposed")

NORM_GUARD = 1e-30
MUSIC_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class Wscm:
    """Per-frequency weighted SCMs, ``matrices[f]`` is M x M."""

    matrices: np.ndarray


@dataclass(frozen=True)
class NormScm:
    """Per-frequency sums of normalized filtered outer products."""

    matrices: np.ndarray


@dataclass(frozen=True)
class SpatialSpectrum:
    values: np.ndarray
    criterion: str
    grid: AngleGrid

    def normalized(self) -> np.ndarray:
        peak = np.max(self.values)
        return self.values / peak if peak > 0 else np.zeros_like(self.values)


def _check_shapes(Y: SnapshotTensor, W: MaskTensor):
    if Y.shape != W.shape:
        raise ValueError(f"snapshot shape {Y.shape} does not match mask shape {W.shape}")


def _outer_sum(Z, scale=None):
    # Sequential accumulation over frames fixes the reduction order, and the
    # products are spelled out in real arithmetic (numpy's complex multiply
    # may fuse operations), so results are bit-reproducible by a scalar loop.
    M, T, F = Z.shape
    re_acc = np.zeros((F, M, M))
    im_acc = np.zeros((F, M, M))
    Zr = np.ascontiguousarray(np.transpose(Z.real, (1, 2, 0)))  # (T, F, M)
    Zi = np.ascontiguousarray(np.transpose(Z.imag, (1, 2, 0)))
    for t in range(T):
        ar, ai = Zr[t][:, :, None], Zi[t][:, :, None]
        br, bi = Zr[t][:, None, :], Zi[t][:, None, :]
        re = ar * br + ai * bi
        im = ai * br - ar * bi
        if scale is not None:
            s = scale[t][:, None, None]
            re = re * s
            im = im * s
        re_acc += re
        im_acc += im
    return re_acc + 1j * im_acc


def compute_wscm(Y: SnapshotTensor, W: MaskTensor) -> Wscm:
    """``Phi(f) = sum_t (w * y)(w * y)^H``."""
    _check_shapes(Y, W)
    return Wscm(_outer_sum(W.weights * Y.data))


def compute_norm_scm(Y: SnapshotTensor, W: MaskTensor, guard: float = NORM_GUARD) -> NormScm:
    """``R(f) = sum_t (w * y)(w * y)^H / ||y||^2``, skipping ``||y||^2 <= guard``."""
    _check_shapes(Y, W)
    nrm2 = np.sum(np.abs(Y.data) ** 2, axis=0)  # (T, F)
    keep = nrm2 > guard
    inv = np.where(keep, 1.0 / np.where(keep, nrm2, 1.0), 0.0)
    return NormScm(_outer_sum(W.weights * Y.data, inv))


def _check_field(mats, field: SteeringField):
    F, M, _ = mats.shape
    if field.vectors.shape[1:] != (F, M):
        raise ValueError(
            f"steering field (F, M) = {field.vectors.shape[1:]} does not match SCMs ({F}, {M})")


def _quad_form(mats, field: SteeringField) -> np.ndarray:
    """``sum_f v^H A(f) v`` for every grid angle."""
    V = field.by_frequency  # (F, n_theta, M)
    Av = np.matmul(V, mats.transpose(0, 2, 1))  # rows are (A v)^T
    return np.sum(Av.real * V.real + Av.imag * V.imag, axis=(0, 2))


def spectrum_music(phi: Wscm, field: SteeringField, floor: float | None = None) -> SpatialSpectrum:
    mats = phi.matrices
    _check_field(mats, field)
    if mats.shape[1] < 2:
        raise ValueError("MUSIC needs at least 2 microphones")
    N = noise_subspace(eig_hermitian(mats))  # (F, M, M-1)
    if floor is None:
        F = mats.shape[0]
        floor = MUSIC_FLOOR_REL * float(np.real(np.trace(mats, axis1=1, axis2=2)).sum()) / F
    floor = max(floor, np.finfo(np.float64).tiny)
    proj = np.matmul(field.by_frequency, np.conj(N))  # (F, n_theta, M-1)
    den = np.sum(proj.real ** 2 + proj.imag ** 2, axis=-1)
    vals = np.sum(1.0 / np.maximum(den, floor), axis=0)
    return SpatialSpectrum(vals, "music", field.grid)


def spectrum_principal(phi: Wscm, field: SteeringField) -> SpatialSpectrum:
    mats = phi.matrices
    _check_field(mats, field)
    p = principal_eigvec(eig_hermitian(mats))  # (F, M)
    corr = np.matmul(np.conj(field.by_frequency), p[:, :, None])[..., 0]  # (F, n_theta)
    vals = np.sum(corr.real ** 2 + corr.imag ** 2, axis=0)
    return SpatialSpectrum(vals, "principal", field.grid)


def spectrum_srp(phi: Wscm, field: SteeringField) -> SpatialSpectrum:
    _check_field(phi.matrices, field)
    return SpatialSpectrum(_quad_form(phi.matrices, field), "srp", field.grid)


def spectrum_proposed(R: NormScm, field: SteeringField) -> SpatialSpectrum:
    _check_field(R.matrices, field)
    vals = np.maximum(_quad_form(R.matrices, field), 0.0)
    return SpatialSpectrum(vals, "proposed", field.grid)


def _normalized_filtered(Y: SnapshotTensor, W: MaskTensor, guard: float):
    nrm = np.sqrt(np.sum(np.abs(Y.data) ** 2, axis=0))
    keep = nrm ** 2 > guard
    return np.where(keep, W.weights * Y.data / np.where(keep, nrm, 1.0), 0.0)


def matching_residual(theta: float, Y: SnapshotTensor, W: MaskTensor, field: SteeringField,
                 guard: float = NORM_GUARD) -> float:
    """Matching residual at one grid angle after the optimal speech STFT is plugged in.

    For each (t, f) the normalized filtered snapshot ``z`` is projected onto
    the steering vector with the pseudoinverse, ``s* = v^+ z``, and the
    squared error ``||z - s* v||^2`` is summed.
    """
    _check_shapes(Y, W)
    k = field.grid.index_of(theta)
    Z = _normalized_filtered(Y, W, guard)
    M, T, F = Z.shape
    total = 0.0
    for f in range(F):
        v = field.vectors[k, f]
        vp = vec_pseudoinverse(v)
        z = Z[:, :, f]  # (M, T)
        s_opt = vp @ z
        err = z - np.outer(v, s_opt)
        total += float(np.sum(np.abs(err) ** 2))
    return total


def matching_residuals(Y: SnapshotTensor, W: MaskTensor, field: SteeringField,
                  guard: float = NORM_GUARD) -> np.ndarray:
    """``matching_residual`` for every grid angle."""
    _check_shapes(Y, W)
    Z = _normalized_filtered(Y, W, guard)  # (M, T, F)
    V = field.vectors  # (A, F, M)
    nrm2 = np.sum(np.abs(V) ** 2, axis=-1)  # (A, F)
    Vp = np.conj(V) / nrm2[..., None]
    out = np.empty(V.shape[0])
    step = 16
    for a0 in range(0, V.shape[0], step):
        sl = slice(a0, a0 + step)
        S = np.einsum("afm,mtf->atf", Vp[sl], Z)
        err = Z[None] - np.einsum("afm,atf->amtf", V[sl], S)
        out[sl] = np.sum(np.abs(err) ** 2, axis=(1, 2, 3))
    return out


def estimate_doa(spectrum: SpatialSpectrum, grid: AngleGrid | None = None) -> float:
    """Grid angle of the global maximum; ties go to the smallest angle."""
    grid = grid or spectrum.grid
    vals = np.asarray(spectrum.values)
    if vals.size == 0:
        raise ValueError("empty spectrum")
    if not np.all(np.isfinite(vals)):
        raise ValueError("spectrum has non-finite values")
    if vals.size != grid.size:
        raise ValueError("spectrum length does not match the grid")
    return float(grid.angles[int(np.argmax(vals))])


def compute_spectrum(method: str, Y: SnapshotTensor, W: MaskTensor,
                     field: SteeringField) -> SpatialSpectrum:
    """Build the covariance the criterion needs and evaluate it."""
    if method == "proposed":
        return spectrum_proposed(compute_norm_scm(Y, W), field)
    phi = compute_wscm(Y, W)
    if method == "music":
        return spectrum_music(phi, field)
    if method == "principal":
        return spectrum_principal(phi, field)
    if method == "srp":
        return spectrum_srp(phi, field)
    raise ValueError(f"unknown method {method!r}")


def write_spectrum_csv(path, spectrum: SpatialSpectrum) -> None:
    norm = spectrum.normalized()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_deg", "value", "normalized_value"])
        for th, v, n in zip(spectrum.grid.angles, spectrum.values, norm):
            w.writerow([f"{th:.6f}", f"{v:.10e}", f"{n:.6f}"])
