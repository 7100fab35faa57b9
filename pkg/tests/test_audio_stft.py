import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sonarray.audio import (
    MultichannelBuffer,
    WavError,
    analysis_window,
    frame_count,
    istft_synthesize,
    read_wav,
    stft_analyze,
    write_wav,
)


def test_wav_round_trip_8ch(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.9, 0.9, (8, 48000))
    write_wav(tmp_path / "a.wav", MultichannelBuffer(x, 48000))
    buf = read_wav(tmp_path / "a.wav")
    assert buf.channel_count == 8
    assert buf.n_samples == 48000
    assert buf.sample_rate == 48000
    np.testing.assert_allclose(buf.samples, x.astype(np.float32), rtol=0, atol=0)


def test_wav_pcm16_round_trip(tmp_path):
    x = np.linspace(-0.5, 0.5, 1000)
    write_wav(tmp_path / "p.wav", MultichannelBuffer(x, 16000), encoding="pcm16")
    buf = read_wav(tmp_path / "p.wav")
    np.testing.assert_allclose(buf.samples[0], x, atol=1 / 32768)


def test_mono_silence(tmp_path):
    write_wav(tmp_path / "s.wav", MultichannelBuffer(np.zeros(480), 48000))
    buf = read_wav(tmp_path / "s.wav")
    assert buf.channel_count == 1
    assert not buf.samples.any()


def test_truncated_header(tmp_path):
    p = tmp_path / "t.wav"
    p.write_bytes(b"RIFF\x24\x00\x00\x00WAVEfmt ")
    with pytest.raises(WavError, match="unreadable file"):
        read_wav(p)


def test_unsupported_encoding(tmp_path):
    with pytest.raises(WavError):
        write_wav(tmp_path / "x.wav", MultichannelBuffer(np.zeros(10), 8000), encoding="mulaw")


def test_frame_count_4096():
    rng = np.random.default_rng(0)
    fs = stft_analyze(MultichannelBuffer(rng.standard_normal(4096), 48000), 1024)
    assert fs.n_frames == 7
    assert fs.hop == 512
    assert frame_count(4096, 1024) == (4096 - 1024) // 512 + 1


def test_short_buffer_rejected():
    with pytest.raises(ValueError, match="shorter than one frame"):
        stft_analyze(MultichannelBuffer(np.zeros(100), 48000), 1024)


def test_non_power_of_two_rejected():
    with pytest.raises(ValueError):
        stft_analyze(MultichannelBuffer(np.zeros(3000), 48000), 1000)


def test_zero_input():
    fs = stft_analyze(MultichannelBuffer(np.zeros((2, 4096)), 48000))
    assert not fs.frames.any()
    assert not istft_synthesize(fs).samples.any()


def test_sinusoid_bin():
    L, k0 = 1024, 37
    n = np.arange(8 * L)
    x = np.cos(2 * np.pi * k0 * n / L)
    P = np.abs(stft_analyze(MultichannelBuffer(x, 48000), L).frames[0]) ** 2
    peak = P[2:-2].argmax(axis=1)
    np.testing.assert_array_equal(peak, k0)
    # The square-root Hann taper keeps the leakage close to k0.
    near = P[3, k0 - 3 : k0 + 4].sum()
    assert near > 0.99 * P[3].sum()


def test_cola():
    L = 1024
    w2 = analysis_window(L) ** 2
    total = w2[: L // 2] + w2[L // 2 :]
    np.testing.assert_allclose(total, 1.0, atol=1e-9)


@given(arrays(float, (2, 5000), elements=st.floats(-1, 1)))
def test_round_trip(x):
    L = 512
    y = istft_synthesize(stft_analyze(MultichannelBuffer(x, 16000), L)).samples
    assert y.shape == x.shape
    interior = slice(L // 2, x.shape[1] - L)
    err = np.sqrt(np.mean((y[:, interior] - x[:, interior]) ** 2))
    ref = np.sqrt(np.mean(x[:, interior] ** 2))
    assert err <= 1e-6 * ref + 1e-15


@given(arrays(float, 4096, elements=st.floats(-1, 1)))
def test_parseval(x):
    L = 1024
    fs = stft_analyze(MultichannelBuffer(x, 48000), L)
    full = fs.full()[0]
    idx = np.arange(fs.n_frames)[:, None] * fs.hop + np.arange(L)
    windowed = x[idx] * fs.window
    lhs = np.sum(np.abs(full) ** 2, axis=1)
    rhs = L * np.sum(windowed**2, axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_full_is_conjugate_symmetric():
    rng = np.random.default_rng(3)
    full = stft_analyze(MultichannelBuffer(rng.standard_normal(2048), 48000), 256).full()
    L = 256
    np.testing.assert_allclose(full[..., 1:], np.conj(full[..., 1:][..., ::-1]), atol=1e-12)
    assert full.shape[-1] == L


def test_single_frame_grain():
    # Oracle: the inverse DFT of one frame, tapered by the synthesis window,
    # placed at hop * index.
    L, n_frames, j = 256, 6, 3
    rng = np.random.default_rng(5)
    spec = np.zeros((1, n_frames, L // 2 + 1), complex)
    spec[0, j] = rng.standard_normal(L // 2 + 1) + 1j * rng.standard_normal(L // 2 + 1)
    spec[0, j, [0, -1]] = spec[0, j, [0, -1]].real
    frames = stft_analyze(MultichannelBuffer(np.zeros((n_frames + 1) * L // 2), 8000), L)
    frames.frames = spec
    y = istft_synthesize(frames).samples[0]

    k = np.arange(L)
    full = np.concatenate([spec[0, j], np.conj(spec[0, j, 1:-1][::-1])])
    grain = (np.exp(2j * np.pi * np.outer(k, k) / L) @ full).real / L * analysis_window(L)
    expect = np.zeros_like(y)
    expect[j * L // 2 : j * L // 2 + L] = grain
    np.testing.assert_allclose(y, expect, atol=1e-12)


def test_inconsistent_frames():
    frames = stft_analyze(MultichannelBuffer(np.zeros(2048), 8000), 256)
    frames.frames = np.zeros((1, 3, 100), complex)
    with pytest.raises(ValueError, match="inconsistent"):
        istft_synthesize(frames)


def test_buffer_invariants():
    with pytest.raises(ValueError):
        MultichannelBuffer(np.zeros(10), 0)
    with pytest.raises(ValueError):
        MultichannelBuffer(np.zeros((0, 10)), 8000)
    assert MultichannelBuffer(np.zeros(480), 48000).duration == pytest.approx(0.01)
