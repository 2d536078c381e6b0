"""Shoebox image-source room simulation and trial scenario rendering."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .array import SPEED_OF_SOUND, ArrayGeometry, angular_distance, rect_array
from .signals import INTERFERENCE_KINDS, SAMPLE_RATE, TimeSignal

__all__ = [
    "RoomConfig",
    "Source",
    "Scenario",
    "RenderedSignals",
    "sabine_absorption",
    "eyring_absorption",
    "simulate_rir",
    "simulate_rirs",
    "schroeder_edc",
    "decay_time",
    "default_image_order",
    "default_room",
    "default_array",
    "sample_scenario",
    "render_scenario",
]

FRAC_DELAY_TAPS = 81
MIN_SEPARATION_DEG = 10.0
MAX_SCENARIO_ATTEMPTS = 10000


@dataclass(frozen=True)
class RoomConfig:
    dims: tuple[float, float, float] = (9.0, 7.0, 3.5)
    rt60: float = 0.3
    fs: int = SAMPLE_RATE
    max_image_order: int = 20

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"room dimensions must be 3 positive lengths, got {self.dims}")
        if self.rt60 <= 0:
            raise ValueError("rt60 must be positive")
        if self.max_image_order < 0:
            raise ValueError("max_image_order must be nonnegative")
        object.__setattr__(self, "dims", dims)

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dims
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dims
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p > 0.0) and np.all(p < np.asarray(self.dims)))


def sabine_absorption(room: RoomConfig) -> float:
    """Uniform wall absorption from Sabine's formula, ``0.161 V / (S rt60)``."""
    alpha = 0.161 * room.volume / (room.surface * room.rt60)
    if alpha > 1.0:
        raise ValueError(
            f"rt60={room.rt60}s is unreachable in a {room.dims} room (alpha={alpha:.3f} > 1)")
    return alpha


def eyring_absorption(room: RoomConfig) -> float:
    """Uniform wall absorption from Eyring's formula, ``1 - exp(-0.161 V / (S rt60))``."""
    return float(1.0 - np.exp(-0.161 * room.volume / (room.surface * room.rt60)))


@lru_cache(maxsize=16)
def _image_lattice(order: int):
    """Lattice indices n, parities p and reflection counts of every image up to ``order``."""
    half = order // 2 + 1
    rng = np.arange(-half, half + 1)
    n = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    p = np.stack(np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij"), axis=-1).reshape(-1, 3)
    nn = np.repeat(n, len(p), axis=0)
    pp = np.tile(p, (len(n), 1))
    refl = np.sum(np.abs(nn - pp) + np.abs(nn), axis=1)
    keep = refl <= order
    return nn[keep], pp[keep], refl[keep]


def _frac_delay_kernel(frac_offsets):
    """Hann-windowed sinc taps at integer offsets k for delays ``k - frac`` (frac in [0, 1))."""
    half = FRAC_DELAY_TAPS // 2
    k = np.arange(-half, half + 1)
    d = frac_offsets[:, None]
    x = k[None, :] - d
    # sin(pi (k - d)) = -(-1)^k sin(pi d); the window cosine splits the same way
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    sin_pd = np.sin(np.pi * d)
    w = 2.0 * np.pi / FRAC_DELAY_TAPS
    cos_x = np.cos(w * k)[None, :] * np.cos(w * d) + np.sin(w * k)[None, :] * np.sin(w * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = -sign[None, :] * sin_pd / (np.pi * x)
    sinc = np.where(x == 0.0, 1.0, sinc)
    return sinc * 0.5 * (1.0 + cos_x), k


def simulate_rirs(room: RoomConfig, src, mics, alpha: float, mode: str = "frac_delay",
                  c: float = SPEED_OF_SOUND, length: int | None = None) -> np.ndarray:
    """Image-source RIRs from one source to several microphones, shape (n_mics, L).

    Each image contributes ``beta**reflections / (4 pi d)`` at delay ``d / c``,
    with ``beta = sqrt(1 - alpha)`` on all six walls.
    """
    if mode not in ("frac_delay", "nearest_sample"):
        raise ValueError(f"unknown tap placement {mode!r}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"absorption {alpha} outside [0, 1]")
    src = np.asarray(src, dtype=np.float64)
    mics = np.atleast_2d(np.asarray(mics, dtype=np.float64))
    if not room.contains(src):
        raise ValueError(f"source {src.tolist()} is outside the room")
    for m in mics:
        if not room.contains(m):
            raise ValueError(f"microphone {m.tolist()} is outside the room")
        if np.array_equal(m, src):
            raise ValueError("source and microphone coincide")

    n, p, refl = _image_lattice(room.max_image_order)
    L = np.asarray(room.dims)
    images = (1 - 2 * p) * src + 2 * n * L  # (K, 3)
    beta = np.sqrt(1.0 - alpha)
    gains = beta ** refl
    live = gains > 0
    images, gains = images[live], gains[live]

    dist = np.linalg.norm(images[None, :, :] - mics[:, None, :], axis=-1)  # (M, K)
    delays = dist * room.fs / c
    amps = gains[None, :] / (4.0 * np.pi * dist)

    half = FRAC_DELAY_TAPS // 2
    if length is None:
        length = int(np.ceil(delays.max())) + half + 2
    out = np.zeros((mics.shape[0], length))
    for m in range(mics.shape[0]):
        if mode == "nearest_sample":
            idx = np.round(delays[m]).astype(int)
            ok = idx < length
            out[m] = np.bincount(idx[ok], weights=amps[m][ok], minlength=length)[:length]
        else:
            base = np.floor(delays[m]).astype(int)
            taps, k = _frac_delay_kernel(delays[m] - base)
            idx = base[:, None] + k[None, :]
            w = taps * amps[m][:, None]
            ok = (idx >= 0) & (idx < length)
            out[m] = np.bincount(idx[ok], weights=w[ok], minlength=length)[:length]
    return out


def simulate_rir(room: RoomConfig, src, mic, alpha: float, mode: str = "frac_delay",
                 c: float = SPEED_OF_SOUND) -> TimeSignal:
    return TimeSignal(simulate_rirs(room, src, mic, alpha, mode, c)[0], room.fs)


def schroeder_edc(rir) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, 0 dB at t = 0."""
    h = rir.samples if isinstance(rir, TimeSignal) else np.asarray(rir)
    energy = np.cumsum((h ** 2)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def decay_time(rir, fs: int = SAMPLE_RATE, start_db: float = -5.0, stop_db: float = -35.0) -> float:
    """Reverberation time from a line fit to the EDC between two levels, extrapolated to -60 dB."""
    edc = schroeder_edc(rir)
    sel = np.flatnonzero((edc <= start_db) & (edc >= stop_db))
    if sel.size < 2:
        raise ValueError(f"EDC does not span {start_db}..{stop_db} dB")
    t = sel / fs
    slope, _ = np.polyfit(t, edc[sel], 1)
    if slope >= 0:
        raise ValueError("EDC is not decaying")
    return float(-60.0 / slope)


@dataclass(frozen=True)
class Source:
    """Source placement relative to the array centre: xy distance, azimuth, height."""

    r: float
    theta: float
    z: float

    def position(self, center) -> np.ndarray:
        th = np.deg2rad(self.theta)
        return np.array([center[0] + self.r * np.cos(th), center[1] + self.r * np.sin(th), self.z])


def default_image_order(rt60: float) -> int:
    """Image order whose Schroeder decay tracks ``rt60`` in the 9 x 7 x 3.5 m room.

    Order 20 covers short rooms; the order bound truncates the tail of longer
    decays, so it grows linearly past that (40 at 0.9 s).
    """
    return max(20, int(round(44.0 * rt60)))


def default_room(rt60: float = 0.3, max_image_order: int | None = None) -> RoomConfig:
    if max_image_order is None:
        max_image_order = default_image_order(rt60)
    return RoomConfig((9.0, 7.0, 3.5), rt60, SAMPLE_RATE, max_image_order)


def default_array() -> ArrayGeometry:
    return rect_array(3, 3, 0.02, (4.5, 3.5, 1.75))


@dataclass(frozen=True)
class Scenario:
    room: RoomConfig
    array: ArrayGeometry
    speaker: Source
    interferers: tuple[Source, ...]
    snr_db: float
    sir_db: float
    seed: int
    interferer_kinds: tuple[str, ...] = field(default=())

    @property
    def K(self) -> int:
        return len(self.interferers)

    def to_json(self) -> str:
        doc = {
            "room": asdict(self.room),
            "array": json.loads(self.array.to_json()),
            "speaker": asdict(self.speaker),
            "interferers": [asdict(s) for s in self.interferers],
            "interferer_kinds": list(self.interferer_kinds),
            "snr_db": _num_out(self.snr_db),
            "sir_db": _num_out(self.sir_db),
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        doc = json.loads(text)
        room = doc["room"]
        return cls(
            room=RoomConfig(tuple(room["dims"]), room["rt60"], room["fs"], room["max_image_order"]),
            array=ArrayGeometry.from_json(json.dumps(doc["array"])),
            speaker=Source(**doc["speaker"]),
            interferers=tuple(Source(**s) for s in doc["interferers"]),
            snr_db=float(doc["snr_db"]),
            sir_db=float(doc["sir_db"]),
            seed=int(doc["seed"]),
            interferer_kinds=tuple(doc.get("interferer_kinds", ())),
        )


def _num_out(x):
    # JSON has no infinity literal
    return "inf" if x == float("inf") else x


def sample_scenario(rt60: float, snr_db: float, sir_db: float, K: int, seed: int,
                    room: RoomConfig | None = None, array: ArrayGeometry | None = None,
                    interferer_kinds: Sequence[str] | None = None) -> Scenario:
    """Draw one speaker and ``K`` interferers around the array centre.

    Distances are uniform in [1, 3] m on the xy-plane, heights uniform in
    [1, 1.8] m, azimuths uniform in [0, 360). Whole draws are rejected until
    every pair of sources is at least 10 degrees apart.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    room = room or default_room(rt60)
    array = array or default_array()
    rng = np.random.default_rng(seed)
    center = array.centroid
    for _ in range(MAX_SCENARIO_ATTEMPTS):
        r = rng.uniform(1.0, 3.0, K + 1)
        th = rng.uniform(0.0, 360.0, K + 1)
        z = rng.uniform(1.0, 1.8, K + 1)
        sep_ok = all(angular_distance(th[i], th[j]) >= MIN_SEPARATION_DEG
                     for i in range(K + 1) for j in range(i + 1, K + 1))
        srcs = [Source(float(r[i]), float(th[i]), float(z[i])) for i in range(K + 1)]
        inside = all(room.contains(s.position(center)) for s in srcs)
        if sep_ok and inside:
            break
    else:
        raise RuntimeError(f"could not place {K + 1} sources {MIN_SEPARATION_DEG} deg apart "
                           f"after {MAX_SCENARIO_ATTEMPTS} attempts")
    if interferer_kinds is None:
        interferer_kinds = tuple(INTERFERENCE_KINDS[i] for i in rng.integers(0, 3, K))
    return Scenario(room, array, srcs[0], tuple(srcs[1:]), float(snr_db), float(sir_db),
                    int(seed), tuple(interferer_kinds))


@dataclass(frozen=True)
class RenderedSignals:
    """Per-microphone mixture and its speech / nonspeech image decomposition."""

    mixture: tuple[TimeSignal, ...]
    speech_images: tuple[TimeSignal, ...]
    nonspeech_images: tuple[TimeSignal, ...]


def _convolve_images(room, src_pos, mics, alpha, mode, sig):
    rirs = simulate_rirs(room, src_pos, mics, alpha, mode)
    n = len(sig)
    return np.stack([fftconvolve(sig.samples, h)[:n] for h in rirs])


def render_scenario(sc: Scenario, speech: TimeSignal, interf: Sequence[TimeSignal],
                    noise_seed=None, mode: str = "frac_delay",
                    absorption: str = "sabine") -> RenderedSignals:
    """Reverberant multichannel rendering with SIR/SNR set at the first microphone.

    Every interferer image is first normalized to unit power at microphone 1;
    their sum is then scaled to the requested SIR against the speech image.
    White noise (independent per microphone) is scaled to the requested SNR
    against the speech image at microphone 1; ``snr_db = inf`` disables it.
    """
    if len(interf) != sc.K:
        raise ValueError(f"scenario has {sc.K} interferers, got {len(interf)} signals")
    n = len(speech)
    if any(len(s) != n for s in interf):
        raise ValueError("all source signals must have equal duration")
    alpha = sabine_absorption(sc.room) if absorption == "sabine" else eyring_absorption(sc.room)
    mics = sc.array.positions
    center = sc.array.centroid

    speech_img = _convolve_images(sc.room, sc.speaker.position(center), mics, alpha, mode, speech)
    p_speech = np.mean(speech_img[0] ** 2)
    if p_speech <= 0:
        raise ValueError("speech image is silent at the reference microphone")

    nonspeech = np.zeros_like(speech_img)
    if sc.K:
        total = np.zeros_like(speech_img)
        for src, sig in zip(sc.interferers, interf):
            img = _convolve_images(sc.room, src.position(center), mics, alpha, mode, sig)
            p = np.mean(img[0] ** 2)
            if p > 0:
                total += img / np.sqrt(p)
        p_int = np.mean(total[0] ** 2)
        if p_int > 0:
            nonspeech += total * np.sqrt(p_speech / (p_int * 10.0 ** (sc.sir_db / 10.0)))
    if np.isfinite(sc.snr_db):
        rng = np.random.default_rng(sc.seed if noise_seed is None else noise_seed)
        noise = rng.standard_normal(speech_img.shape)
        noise *= np.sqrt(p_speech / (np.mean(noise[0] ** 2) * 10.0 ** (sc.snr_db / 10.0)))
        nonspeech += noise

    mixture = speech_img + nonspeech
    return RenderedSignals(
        mixture=tuple(TimeSignal(x) for x in mixture),
        speech_images=tuple(TimeSignal(x) for x in speech_img),
        nonspeech_images=tuple(TimeSignal(x) for x in nonspeech),
    )
