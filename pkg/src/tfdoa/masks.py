"""Time-frequency weights: oracle ratio masks, post-processing, TFW1 files.

A mask tensor holds one real weight in [0, 1] per (microphone, frame, bin).
Post-processing maps the per-microphone masks ``G_m`` to the weights
``W_m`` that filter the snapshots.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

from .signals import SnapshotTensor

__all__ = [
    "MaskTensor",
    "PostProc",
    "POSTPROC_KINDS",
    "MaskFileError",
    "oracle_irm",
    "post_process",
    "load_mask",
    "save_mask",
]

POSTPROC_KINDS = ("identity", "minimum", "maximum", "arith_mean", "arith_median",
                  "hadamard", "geo_mean", "binary_threshold", "constant")

MAGIC = b"TFW1"


class MaskFileError(ValueError):
    pass


@dataclass(frozen=True)
class MaskTensor:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 3:
            raise ValueError(f"mask must be (M, T, F), got {w.shape}")
        bad = ~((w >= 0.0) & (w <= 1.0))
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValueError(f"mask value {w[idx]!r} at index {idx} outside [0, 1]")
        object.__setattr__(self, "weights", w)

    @property
    def shape(self):
        return self.weights.shape

    @classmethod
    def ones(cls, shape) -> "MaskTensor":
        return cls(np.ones(shape))


@dataclass(frozen=True)
class PostProc:
    """One row of the post-processing table; ``beta`` only for binary_threshold."""

    kind: str
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in POSTPROC_KINDS:
            raise ValueError(f"unknown post-processing {self.kind!r}")
        if self.kind == "binary_threshold":
            if self.beta is None or not 0.0 < self.beta < 1.0:
                raise ValueError(f"binary_threshold needs beta in (0, 1), got {self.beta}")
        elif self.beta is not None:
            raise ValueError(f"{self.kind} takes no beta")

    def __str__(self):
        if self.kind == "binary_threshold":
            return f"binary_threshold({self.beta:g})"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "PostProc":
        """Accepts ``hadamard``, ``binary_threshold(0.9)`` or ``binary_threshold:0.9``."""
        text = text.strip()
        m = re.fullmatch(r"binary_threshold\s*[(:]\s*([0-9.eE+-]+)\s*\)?", text)
        if m:
            return cls("binary_threshold", float(m.group(1)))
        return cls(text)


def oracle_irm(speech_images: SnapshotTensor, nonspeech_images: SnapshotTensor) -> MaskTensor:
    """Ideal ratio mask ``sqrt(|s|^2 / (|s|^2 + |n|^2))`` per (m, t, f); 0/0 -> 0."""
    s, n = speech_images.data, nonspeech_images.data
    if s.shape != n.shape:
        raise ValueError(f"speech {s.shape} and nonspeech {n.shape} shapes differ")
    ps = np.abs(s) ** 2
    den = ps + np.abs(n) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den > 0, ps / np.where(den > 0, den, 1.0), 0.0)
    return MaskTensor(np.sqrt(np.clip(ratio, 0.0, 1.0)))


def post_process(pp: PostProc, G: MaskTensor) -> MaskTensor:
    """Combine the per-microphone masks into the weights applied to each microphone.

    All kinds except ``identity`` and ``binary_threshold`` give every
    microphone the same value at a (t, f) bin.
    """
    g = G.weights
    M = g.shape[0]
    kind = pp.kind
    if kind == "identity":
        return MaskTensor(g.copy())
    if kind == "constant":
        return MaskTensor(np.ones_like(g))
    if kind == "binary_threshold":
        return MaskTensor((g > pp.beta).astype(np.float64))
    if kind == "minimum":
        shared = g.min(axis=0)
    elif kind == "maximum":
        shared = g.max(axis=0)
    elif kind == "arith_mean":
        shared = g.mean(axis=0)
    elif kind == "arith_median":
        shared = np.median(g, axis=0)
    elif kind == "hadamard":
        shared = np.prod(g, axis=0)
    else:  # geo_mean
        shared = np.prod(g, axis=0) ** (1.0 / M)
    shared = np.clip(shared, 0.0, 1.0)
    return MaskTensor(np.broadcast_to(shared, g.shape).copy())


def save_mask(path, mask: MaskTensor) -> None:
    """Write a TFW1 container: magic, three uint32 dims, float32 values (m, t, f order)."""
    M, T, F = mask.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", M, T, F))
        fh.write(np.ascontiguousarray(mask.weights, dtype="<f4").tobytes())


def load_mask(path, expected_shape=None) -> MaskTensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise MaskFileError(f"{path}: missing TFW1 header")
    dims = struct.unpack("<III", blob[4:16])
    if expected_shape is not None and tuple(dims) != tuple(expected_shape):
        raise MaskFileError(f"{path}: mask shape {dims} does not match expected {tuple(expected_shape)}")
    count = dims[0] * dims[1] * dims[2]
    payload = blob[16:]
    if len(payload) != 4 * count:
        raise MaskFileError(f"{path}: expected {4 * count} data bytes, found {len(payload)}")
    w = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)
    bad = ~((w >= 0.0) & (w <= 1.0))
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise MaskFileError(f"{path}: value {w[idx]!r} at index {idx} outside [0, 1]")
    return MaskTensor(w)
