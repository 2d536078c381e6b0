import wave

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tfdoa.signals import (SAMPLE_RATE, Spectrogram, StftConfig, TimeSignal, WavError,
                           compute_stft, load_wav, speech_fundamental, stack_snapshots,
                           synth_interference, synth_speech_like, write_wav)

FULL = StftConfig(window="rect", band=(0.0, 8000.0))


def dft_oracle(frame):
    n = len(frame)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ frame


def test_zero_signal():
    spec = compute_stft(TimeSignal(np.zeros(4096)))
    assert not np.any(spec.data)


def test_impulse_rect_window():
    x = np.zeros(2048)
    x[0] = 1.0
    spec = compute_stft(TimeSignal(x), FULL)
    np.testing.assert_allclose(np.abs(spec.data[0]), 1.0, atol=1e-12)


def test_sinusoid_peak_bin():
    t = np.arange(4096) / SAMPLE_RATE
    spec = compute_stft(TimeSignal(np.sin(2 * np.pi * 1000.0 * t)), FULL)
    # bin index = column index in the full band
    assert np.all(np.argmax(np.abs(spec.data), axis=1) == 64)
    assert spec.bin_freqs[64] == 1000.0


def test_matches_direct_dft():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1024 + 3 * 256)
    cfg = StftConfig(fft_size=1024, hop=256, window="hann", band=(0.0, 8000.0))
    spec = compute_stft(TimeSignal(x), cfg)
    win = cfg.window_values()
    for t in range(spec.data.shape[0]):
        ref = dft_oracle(x[t * 256:t * 256 + 1024] * win)[:513]
        np.testing.assert_allclose(spec.data[t], ref, atol=1e-9)


def test_default_band_bins():
    spec = compute_stft(TimeSignal(np.ones(1024)))
    f = spec.bin_freqs
    assert f[0] == 62.5 and f[-1] == 7000.0
    assert len(f) == 445
    assert np.all((f >= 50.0) & (f <= 7000.0))


def test_band_edges_inclusive():
    cfg = StftConfig(band=(62.5, 125.0))
    spec = compute_stft(TimeSignal(np.ones(1024)), cfg)
    np.testing.assert_array_equal(spec.bin_freqs, [62.5, 78.125, 93.75, 109.375, 125.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(16, 600), st.integers(16, 128), st.integers(1, 128))
def test_frame_count_formula(n, fft_size, hop):
    hop = min(hop, fft_size)
    n = max(n, fft_size)
    cfg = StftConfig(fft_size=fft_size, hop=hop, band=(0.0, 8000.0))
    spec = compute_stft(TimeSignal(np.ones(n)), cfg)
    assert spec.data.shape[0] == (n - fft_size) // hop + 1


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda a: abs(a) > 1e-6), st.integers(0, 1000))
def test_linearity(a, seed):
    x = np.random.default_rng(seed).standard_normal(3000)
    s1 = compute_stft(TimeSignal(a * x)).data
    s2 = a * compute_stft(TimeSignal(x)).data
    assert np.max(np.abs(s1 - s2)) <= 1e-12 * np.max(np.abs(s2))


def test_errors():
    with pytest.raises(ValueError):
        compute_stft(TimeSignal(np.ones(100)))
    with pytest.raises(ValueError, match="no FFT bins"):
        compute_stft(TimeSignal(np.ones(1024)), StftConfig(band=(10.0, 12.0)))
    with pytest.raises(ValueError):
        StftConfig(hop=2048)
    with pytest.raises(ValueError):
        StftConfig(band=(0.0, 9000.0))


def test_sample_rate_fixed():
    with pytest.raises(ValueError):
        TimeSignal(np.zeros(10), sample_rate=8000)
    with pytest.raises(ValueError):
        TimeSignal(np.array([0.0, np.inf]))


def test_stack_snapshots():
    rng = np.random.default_rng(1)
    d = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    f = np.arange(7.0)
    one = stack_snapshots([Spectrogram(d, f)])
    assert one.shape == (1, 5, 7)
    np.testing.assert_array_equal(one.data[0], d)
    two = stack_snapshots([Spectrogram(d, f), Spectrogram(d.copy(), f)])
    np.testing.assert_array_equal(two.data[0], two.data[1])
    with pytest.raises(ValueError):
        stack_snapshots([Spectrogram(d, f), Spectrogram(d[:4], f)])


def test_first_frames_truncate_and_pad():
    rng = np.random.default_rng(2)
    Y = stack_snapshots([Spectrogram(rng.standard_normal((4, 3)) + 0j, np.arange(3.0))])
    assert Y.first_frames(2).shape == (1, 2, 3)
    padded = Y.first_frames(6)
    assert padded.shape == (1, 6, 3)
    assert not np.any(padded.data[:, 4:])


def test_speech_like_determinism_power_and_pitch():
    a = synth_speech_like(7, 1.5)
    b = synth_speech_like(7, 1.5)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert abs(a.power() - 1.0) <= 1e-6
    for seed in range(6):
        x = synth_speech_like(seed, 2.0).samples
        spec = np.abs(np.fft.rfft(x))
        freqs = np.fft.rfftfreq(len(x), 1.0 / SAMPLE_RATE)
        f0 = speech_fundamental(seed)
        assert 100.0 <= f0 <= 300.0
        assert abs(freqs[np.argmax(spec)] - f0) <= 10.0


@pytest.mark.parametrize("kind", ["machine", "water_like", "wind_like"])
def test_interference_determinism_and_power(kind):
    a = synth_interference(kind, 3, 1.0)
    assert a.samples.tobytes() == synth_interference(kind, 3, 1.0).samples.tobytes()
    assert abs(a.power() - 1.0) <= 1e-6


def test_wind_energy_is_low_frequency():
    for seed in range(4):
        x = synth_interference("wind_like", seed, 2.0).samples
        p = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(len(x), 1.0 / SAMPLE_RATE)
        assert p[f < 500.0].sum() >= 0.8 * p.sum()


def test_unknown_interference():
    with pytest.raises(ValueError):
        synth_interference("rain", 0, 1.0)


def _write_raw_wav(path, pcm, rate=SAMPLE_RATE, channels=1, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(pcm)


def test_load_wav_scaling(tmp_path):
    p = tmp_path / "a.wav"
    _write_raw_wav(p, np.array([0, 16384, -16384], dtype="<i2").tobytes())
    np.testing.assert_array_equal(load_wav(p).samples, [0.0, 0.5, -0.5])


def test_load_wav_rejects(tmp_path):
    p = tmp_path / "r.wav"
    _write_raw_wav(p, np.zeros(10, dtype="<i2").tobytes(), rate=8000)
    with pytest.raises(WavError, match="sample rate"):
        load_wav(p)
    _write_raw_wav(p, np.zeros(10, dtype="<i2").tobytes(), channels=2)
    with pytest.raises(WavError, match="channels"):
        load_wav(p)
    _write_raw_wav(p, np.zeros(10, dtype="u1").tobytes(), width=1)
    with pytest.raises(WavError, match="16-bit"):
        load_wav(p)
    _write_raw_wav(p, np.zeros(100, dtype="<i2").tobytes())
    blob = p.read_bytes()
    p.write_bytes(blob[:-51])
    with pytest.raises(WavError, match="truncated"):
        load_wav(p)


def test_load_wav_rejects_float_encoding(tmp_path):
    import struct
    data = np.zeros(4, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, SAMPLE_RATE, SAMPLE_RATE * 4, 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    p = tmp_path / "f.wav"
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(WavError):
        load_wav(p)


def test_write_wav_roundtrip(tmp_path):
    x = np.array([0.0, 0.25, -0.5, 0.999])
    p = tmp_path / "w.wav"
    peak = write_wav(p, TimeSignal(x))
    assert peak == pytest.approx(0.999)
    np.testing.assert_allclose(load_wav(p).samples, x, atol=1 / 32768)
