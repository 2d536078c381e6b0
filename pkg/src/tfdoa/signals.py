"""Time-domain sources, WAV I/O and STFT analysis into snapshot tensors."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sps

SAMPLE_RATE = 16000

__all__ = [
    "SAMPLE_RATE",
    "TimeSignal",
    "StftConfig",
    "Spectrogram",
    "SnapshotTensor",
    "WavError",
    "compute_stft",
    "stack_snapshots",
    "synth_speech_like",
    "speech_fundamental",
    "synth_interference",
    "INTERFERENCE_KINDS",
    "load_wav",
    "write_wav",
]


class WavError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSignal:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("TimeSignal samples must be one-dimensional")
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValueError("TimeSignal samples must be finite")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(self.samples ** 2))


@dataclass(frozen=True)
class StftConfig:
    """STFT parameters. Bins outside the closed band ``[f_lo, f_hi]`` are dropped."""

    fft_size: int = 1024
    hop: int = 512
    window: str = "hann"
    band: tuple[float, float] = (50.0, 7000.0)

    def __post_init__(self):
        if self.fft_size < 1 or self.hop < 1:
            raise ValueError("fft_size and hop must be positive")
        if self.hop > self.fft_size:
            raise ValueError("hop must not exceed fft_size")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")
        lo, hi = self.band
        if not 0.0 <= lo < hi <= SAMPLE_RATE / 2:
            raise ValueError(f"invalid band {self.band}")

    def window_values(self) -> np.ndarray:
        if self.window == "rect":
            return np.ones(self.fft_size)
        # periodic Hann
        n = np.arange(self.fft_size)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.fft_size)

    def bin_selection(self) -> tuple[np.ndarray, np.ndarray]:
        freqs = np.fft.rfftfreq(self.fft_size, d=1.0 / SAMPLE_RATE)
        lo, hi = self.band
        idx = np.flatnonzero((freqs >= lo) & (freqs <= hi))
        return idx, freqs[idx]

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.fft_size) // self.hop + 1

    def samples_for(self, n_frames: int) -> int:
        return (n_frames - 1) * self.hop + self.fft_size


@dataclass(frozen=True)
class Spectrogram:
    """Single-channel STFT, ``data[t, f]``."""

    data: np.ndarray
    bin_freqs: np.ndarray


@dataclass(frozen=True)
class SnapshotTensor:
    """Multichannel STFT cube ``data[m, t, f]``; ``data[:, t, f]`` is one snapshot."""

    data: np.ndarray
    bin_freqs: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"snapshot data must be (M, T, F), got {self.data.shape}")
        if self.data.shape[2] != len(self.bin_freqs):
            raise ValueError("bin_freqs length does not match F")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("snapshot tensor has non-finite entries")

    @property
    def shape(self):
        return self.data.shape

    def first_frames(self, n_frames: int) -> "SnapshotTensor":
        """First ``n_frames`` frames, zero-padded when fewer are available."""
        M, T, F = self.data.shape
        if n_frames <= T:
            return SnapshotTensor(self.data[:, :n_frames, :], self.bin_freqs)
        out = np.zeros((M, n_frames, F), dtype=self.data.dtype)
        out[:, :T, :] = self.data
        return SnapshotTensor(out, self.bin_freqs)


def compute_stft(sig: TimeSignal, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Framed DFT without padding; ``T = (len - fft_size) // hop + 1``."""
    x = sig.samples
    if len(x) < cfg.fft_size:
        raise ValueError(f"signal of {len(x)} samples is shorter than fft_size={cfg.fft_size}")
    idx, freqs = cfg.bin_selection()
    if idx.size == 0:
        raise ValueError(f"no FFT bins inside band {cfg.band}")
    n_frames = cfg.n_frames(len(x))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.fft_size)[::cfg.hop][:n_frames]
    spec = np.fft.rfft(frames * cfg.window_values(), axis=-1)
    return Spectrogram(data=spec[:, idx], bin_freqs=freqs)


def stack_snapshots(channels: Sequence[Spectrogram]) -> SnapshotTensor:
    if len(channels) == 0:
        raise ValueError("no channels to stack")
    ref = channels[0]
    for k, ch in enumerate(channels[1:], start=1):
        if ch.data.shape != ref.data.shape or not np.array_equal(ch.bin_freqs, ref.bin_freqs):
            raise ValueError(
                f"channel {k} has shape {ch.data.shape}, expected {ref.data.shape}")
    return SnapshotTensor(np.stack([ch.data for ch in channels]), ref.bin_freqs.copy())


def _normalize_power(x):
    p = np.mean(x ** 2)
    if p <= 0:
        return x
    return x / np.sqrt(p)


def _n_samples(duration):
    if duration <= 0:
        raise ValueError("duration must be positive")
    return max(1, int(round(duration * SAMPLE_RATE)))


def speech_fundamental(seed: int) -> float:
    """The fundamental frequency that ``synth_speech_like(seed, ...)`` draws."""
    return float(np.random.default_rng(seed).uniform(100.0, 300.0))


def synth_speech_like(seed: int, duration: float) -> TimeSignal:
    """Voiced harmonic stack with syllable-rate gating plus modulated band noise.

    The fundamental is the first draw from ``default_rng(seed)``, uniform in
    [100, 300] Hz. Harmonic amplitudes fall as 1/k so the fundamental stays the
    spectral peak. The result has unit mean power.
    """
    rng = np.random.default_rng(seed)
    f0 = rng.uniform(100.0, 300.0)
    n = _n_samples(duration)
    t = np.arange(n) / SAMPLE_RATE

    n_harm = int(7500.0 // f0)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_harm)
    k = np.arange(1, n_harm + 1)
    voiced = np.zeros(n)
    for kk, ph in zip(k, phases):
        voiced += np.sin(2.0 * np.pi * kk * f0 * t + ph) / kk

    # syllables: 3-5 Hz half-wave bursts separated by pauses
    rate = rng.uniform(3.0, 5.0)
    env_phase = rng.uniform(0.0, 2.0 * np.pi)
    env = np.clip(np.sin(2.0 * np.pi * rate * t + env_phase), 0.0, None) ** 0.5

    sos = sps.butter(4, [1000.0, 4000.0], btype="bandpass", fs=SAMPLE_RATE, output="sos")
    fric = sps.sosfilt(sos, rng.standard_normal(n))
    fric_env = np.clip(np.sin(2.0 * np.pi * rate * t + env_phase + np.pi), 0.0, None)
    fric = 0.15 * _normalize_power(fric) * fric_env

    x = voiced * env
    x = _normalize_power(x) + fric
    return TimeSignal(_normalize_power(x))


INTERFERENCE_KINDS = ("machine", "water_like", "wind_like")
MACHINE_F0 = 120.0


def synth_interference(kind: str, seed: int, duration: float) -> TimeSignal:
    """Stationary-ish nonspeech stand-ins, unit mean power.

    ``machine`` is a fixed-f0 harmonic stack with a slow beat, ``water_like``
    is high-passed noise with random bubbling bursts, and ``wind_like`` is
    low-passed noise with slow gusting.
    """
    if kind not in INTERFERENCE_KINDS:
        raise ValueError(f"unknown interference kind {kind!r}")
    rng = np.random.default_rng(seed)
    n = _n_samples(duration)
    t = np.arange(n) / SAMPLE_RATE

    if kind == "machine":
        n_harm = int(7000.0 // MACHINE_F0)
        amps = rng.uniform(0.2, 1.0, n_harm)
        phases = rng.uniform(0.0, 2.0 * np.pi, n_harm)
        x = np.zeros(n)
        for k in range(1, n_harm + 1):
            x += amps[k - 1] * np.sin(2.0 * np.pi * k * MACHINE_F0 * t + phases[k - 1])
        x *= 1.0 + 0.3 * np.sin(2.0 * np.pi * rng.uniform(0.5, 2.0) * t)
    elif kind == "water_like":
        sos = sps.butter(4, 1500.0, btype="highpass", fs=SAMPLE_RATE, output="sos")
        x = sps.sosfilt(sos, rng.standard_normal(n))
        bursts = sps.sosfilt(
            sps.butter(2, 20.0, fs=SAMPLE_RATE, output="sos"),
            (rng.random(n) < 30.0 / SAMPLE_RATE).astype(float) * SAMPLE_RATE / 10.0)
        x *= 0.5 + np.abs(bursts)
    else:
        sos = sps.butter(4, 250.0, btype="lowpass", fs=SAMPLE_RATE, output="sos")
        x = sps.sosfilt(sos, rng.standard_normal(n))
        gust = 1.0 + 0.6 * np.sin(2.0 * np.pi * rng.uniform(0.2, 1.0) * t + rng.uniform(0, 2 * np.pi))
        x *= gust
    return TimeSignal(_normalize_power(x))


def load_wav(path) -> TimeSignal:
    """Read a 16-bit PCM mono 16 kHz WAV file, scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_ch = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        raise WavError(f"unsupported WAV encoding: {exc}") from exc
    except EOFError as exc:
        raise WavError(f"truncated WAV file: {path}") from exc
    if rate != SAMPLE_RATE:
        raise WavError(f"sample rate {rate} Hz, expected {SAMPLE_RATE}")
    if n_ch != 1:
        raise WavError(f"{n_ch} channels, expected mono")
    if width != 2:
        raise WavError(f"{8 * width}-bit samples, expected 16-bit PCM")
    if len(raw) != n_frames * width:
        raise WavError(f"truncated WAV file: {len(raw)} of {n_frames * width} data bytes")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return TimeSignal(pcm / 32768.0)


def write_wav(path, sig: TimeSignal, scale: float = 1.0) -> float:
    """Write ``scale * samples`` as 16-bit PCM, clipping to range.

    Returns the peak factor ``max|scale * x|``; values above 1 were clipped.
    """
    x = scale * sig.samples
    peak = float(np.max(np.abs(x))) if len(x) else 0.0
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sig.sample_rate)
        wf.writeframes(pcm.tobytes())
    return peak
