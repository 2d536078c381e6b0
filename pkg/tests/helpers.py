"""Shared fixtures-by-function for the test suite: random inputs and oracles."""

import numpy as np

from tfdoa.array import AngleGrid, ArrayGeometry, build_steering_field, rect_array
from tfdoa.masks import MaskTensor
from tfdoa.signals import SnapshotTensor


def random_problem(seed, M=4, T=10, F=16, resolution=0.5):
    """Random snapshots, masks in [0, 1] and a steering field for a random array."""
    rng = np.random.default_rng(seed)
    geom = ArrayGeometry(rng.uniform(-0.05, 0.05, (M, 3)))
    freqs = np.sort(rng.uniform(100.0, 7000.0, F))
    Y = SnapshotTensor(rng.standard_normal((M, T, F)) + 1j * rng.standard_normal((M, T, F)), freqs)
    W = MaskTensor(rng.random((M, T, F)))
    field = build_steering_field(geom, AngleGrid(resolution), freqs)
    return Y, W, field


def default_field(freqs):
    return build_steering_field(rect_array(3, 3, 0.02, (4.5, 3.5, 1.75)), AngleGrid(0.5), freqs)


def plane_wave(field, theta, T, seed):
    """Noise-free free-field snapshots y(t, f) = v(theta, f) s(t, f)."""
    rng = np.random.default_rng(seed)
    F = field.vectors.shape[1]
    s = rng.standard_normal((T, F)) + 1j * rng.standard_normal((T, F))
    v = field.vectors[field.grid.index_of(theta)]  # (F, M)
    data = np.transpose(v[None, :, :] * s[:, :, None], (2, 0, 1))
    return SnapshotTensor(np.ascontiguousarray(data), field.bin_freqs)


def brute_wscm(Y, W, scale=None):
    """Scalar triple loop over (t, m, m') in real arithmetic."""
    M, T, F = Y.shape
    out = np.zeros((F, M, M), dtype=complex)
    for f in range(F):
        for m in range(M):
            for n in range(M):
                re = 0.0
                im = 0.0
                for t in range(T):
                    a = float(W.weights[m, t, f]) * complex(Y.data[m, t, f])
                    b = float(W.weights[n, t, f]) * complex(Y.data[n, t, f])
                    pr = a.real * b.real + a.imag * b.imag
                    pi = a.imag * b.real - a.real * b.imag
                    if scale is not None:
                        pr *= scale[t, f]
                        pi *= scale[t, f]
                    re += pr
                    im += pi
                out[f, m, n] = complex(re, im)
    return out


def tie_set(values, best, rtol=1e-12):
    values = np.asarray(values)
    scale = max(np.max(np.abs(values)), np.finfo(float).tiny)
    return set(np.flatnonzero(np.abs(values - best) <= rtol * scale).tolist())
