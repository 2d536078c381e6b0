"""Array geometry, far-field steering vectors and the azimuth search grid.

Azimuth is measured counterclockwise from +x in the xy-plane. Phases are
referenced to the array centroid, so for a plane wave arriving from ``theta``
microphone ``m`` sees the delay ``tau_m = -(p_m - centroid) . u(theta) / c``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SPEED_OF_SOUND = 343.0

__all__ = [
    "SPEED_OF_SOUND",
    "ArrayGeometry",
    "AngleGrid",
    "SteeringField",
    "rect_array",
    "steering_vector",
    "build_steering_field",
    "angular_distance",
]


@dataclass(frozen=True)
class ArrayGeometry:
    positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"positions must be (M, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("microphone positions must be finite")
        if self.speed_of_sound <= 0:
            raise ValueError("speed of sound must be positive")
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        d[np.diag_indices(len(pos))] = np.inf
        if np.any(d == 0.0):
            raise ValueError("two microphones share a position")
        object.__setattr__(self, "positions", pos)

    @property
    def n_mics(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def to_json(self) -> str:
        return json.dumps({"positions_m": self.positions.tolist(),
                           "speed_of_sound": self.speed_of_sound})

    @classmethod
    def from_json(cls, text: str) -> "ArrayGeometry":
        doc = json.loads(text)
        return cls(np.asarray(doc["positions_m"], dtype=np.float64),
                   float(doc.get("speed_of_sound", SPEED_OF_SOUND)))


@dataclass(frozen=True)
class AngleGrid:
    """Azimuth candidates ``k * resolution`` for k = 0 .. 360/resolution - 1."""

    resolution: float = 0.5

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("grid resolution must be positive")
        n = 360.0 / self.resolution
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"resolution {self.resolution} does not divide 360")

    @property
    def size(self) -> int:
        return int(round(360.0 / self.resolution))

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.size) * self.resolution

    def index_of(self, theta: float) -> int:
        return int(round((theta % 360.0) / self.resolution)) % self.size


@dataclass(frozen=True)
class SteeringField:
    """Precomputed steering vectors ``vectors[theta_index, f, m]``."""

    vectors: np.ndarray
    bin_freqs: np.ndarray
    grid: AngleGrid

    @property
    def n_mics(self) -> int:
        return self.vectors.shape[2]

    @cached_property
    def by_frequency(self) -> np.ndarray:
        """Contiguous ``(f, theta_index, m)`` copy for per-frequency matrix products."""
        return np.ascontiguousarray(self.vectors.transpose(1, 0, 2))


def rect_array(rows: int, cols: int, spacing_m: float, center=(0.0, 0.0, 0.0),
               speed_of_sound: float = SPEED_OF_SOUND) -> ArrayGeometry:
    """Planar ``rows x cols`` grid parallel to the xy-plane, centered on ``center``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be at least 1")
    if spacing_m <= 0:
        raise ValueError("spacing must be positive")
    center = np.asarray(center, dtype=np.float64)
    xs = (np.arange(cols) - (cols - 1) / 2.0) * spacing_m
    ys = (np.arange(rows) - (rows - 1) / 2.0) * spacing_m
    gx, gy = np.meshgrid(xs, ys)
    offsets = np.stack([gx.ravel(), gy.ravel(), np.zeros(rows * cols)], axis=1)
    return ArrayGeometry(center + offsets, speed_of_sound)


def _unit(theta_deg):
    th = np.deg2rad(theta_deg)
    return np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=-1)


def _delays(geom: ArrayGeometry, theta_deg) -> np.ndarray:
    rel = geom.positions - geom.centroid
    return -(_unit(np.asarray(theta_deg, dtype=np.float64)) @ rel.T) / geom.speed_of_sound


def steering_vector(geom: ArrayGeometry, theta: float, f: float) -> np.ndarray:
    """Unit-modulus plane-wave response ``exp(-j 2 pi f tau_m)``."""
    return np.exp(-2j * np.pi * f * _delays(geom, theta))


def build_steering_field(geom: ArrayGeometry, grid: AngleGrid, bin_freqs) -> SteeringField:
    bin_freqs = np.asarray(bin_freqs, dtype=np.float64)
    tau = _delays(geom, grid.angles)  # (n_theta, M)
    vec = np.exp(-2j * np.pi * bin_freqs[None, :, None] * tau[:, None, :])
    return SteeringField(vectors=vec, bin_freqs=bin_freqs, grid=grid)


def angular_distance(a, b):
    """Smallest absolute difference between azimuths, in [0, 180] degrees."""
    d = np.mod(np.abs(np.asarray(a, dtype=np.float64) - b), 360.0)
    out = np.minimum(d, 360.0 - d)
    return float(out) if np.ndim(out) == 0 else out
