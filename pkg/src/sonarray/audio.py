"""Multichannel audio buffers, WAV I/O and the 50%-overlap STFT pair."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = [
    "WavError",
    "MultichannelBuffer",
    "SpectralFrameSet",
    "read_wav",
    "write_wav",
    "analysis_window",
    "frame_count",
    "stft_analyze",
    "istft_synthesize",
]


class WavError(ValueError):
    """Raised for WAV files that cannot be read or written."""


@dataclass
class MultichannelBuffer:
    """Real-valued audio, shape ``(channels, samples)``, float64."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[np.newaxis, :]
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError("samples must have shape (channels, samples)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = s
        self.sample_rate = int(self.sample_rate)

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


def read_wav(path) -> MultichannelBuffer:
    """Read a PCM16 or IEEE float32 WAV file into a float64 buffer."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError/EOFError/struct.error
        raise WavError(f"unreadable file: {path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise WavError(f"unsupported encoding {data.dtype} in {path}")
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    if samples.shape[1] == 0:
        raise WavError(f"zero channels in {path}")
    return MultichannelBuffer(samples.T.copy(), rate)


def write_wav(path, buf: MultichannelBuffer, encoding: str = "float32") -> None:
    """Write ``buf`` as interleaved little-endian PCM16 or float32."""
    data = buf.samples.T
    if encoding == "float32":
        out = data.astype(np.float32)
    elif encoding == "pcm16":
        out = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise WavError(f"unsupported encoding {encoding!r}")
    if out.shape[1] == 1:
        out = out[:, 0]
    wavfile.write(Path(path), buf.sample_rate, np.ascontiguousarray(out))


def analysis_window(L: int) -> np.ndarray:
    """Square root of the periodic Hann window.

    Used for both analysis and synthesis, so the product is a periodic Hann
    window which sums to exactly one at hop ``L/2``.
    """
    n = np.arange(L)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / L))


def frame_count(n_samples: int, L: int) -> int:
    """Frames needed to cover ``n_samples`` at hop ``L/2`` (last frame zero-padded)."""
    hop = L // 2
    if n_samples < L:
        raise ValueError(f"buffer shorter than one frame ({n_samples} < {L})")
    return -(-(n_samples - L) // hop) + 1


@dataclass
class SpectralFrameSet:
    """One-sided STFT frames, shape ``(channels, frames, L//2 + 1)``.

    Only bins up to Nyquist are stored; :meth:`full` rebuilds the L-bin
    conjugate-symmetric spectra.
    """

    frames: np.ndarray
    frame_length: int
    sample_rate: int
    n_samples: int
    window: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.window is None:
            self.window = analysis_window(self.frame_length)

    @property
    def hop(self) -> int:
        return self.frame_length // 2

    @property
    def n_channels(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[2]

    def full(self) -> np.ndarray:
        L = self.frame_length
        mirrored = np.conj(self.frames[..., 1 : L // 2][..., ::-1])
        return np.concatenate([self.frames, mirrored], axis=-1)

    def frame_time(self, index) -> np.ndarray:
        """Centre time (s) of frame ``index``."""
        return (np.asarray(index) * self.hop + self.frame_length / 2) / self.sample_rate


def stft_analyze(buf: MultichannelBuffer, L: int = 1024) -> SpectralFrameSet:
    """Windowed forward transform of every channel at 50% overlap."""
    if L < 2 or L & (L - 1):
        raise ValueError("L must be a power of two")
    x = buf.samples
    hop = L // 2
    n = frame_count(x.shape[1], L)
    padded_len = (n - 1) * hop + L
    if padded_len > x.shape[1]:
        x = np.pad(x, ((0, 0), (0, padded_len - x.shape[1])))
    win = analysis_window(L)
    idx = np.arange(n)[:, None] * hop + np.arange(L)[None, :]
    segments = x[:, idx] * win
    spectra = np.fft.rfft(segments, axis=-1)
    return SpectralFrameSet(spectra, L, buf.sample_rate, buf.n_samples, win)


def istft_synthesize(frames: SpectralFrameSet) -> MultichannelBuffer:
    """Overlap-add resynthesis with the same square-root Hann window."""
    spec = np.asarray(frames.frames)
    if spec.ndim == 2:
        spec = spec[np.newaxis]
    L = frames.frame_length
    if spec.ndim != 3 or spec.shape[-1] != L // 2 + 1:
        raise ValueError(
            f"inconsistent frame dimensions {spec.shape} for frame length {L}"
        )
    hop = L // 2
    n_ch, n_frames, _ = spec.shape
    grains = np.fft.irfft(spec, n=L, axis=-1) * frames.window
    out = np.zeros((n_ch, (n_frames - 1) * hop + L))
    for ell in range(n_frames):
        out[:, ell * hop : ell * hop + L] += grains[:, ell]
    n_out = frames.n_samples if frames.n_samples else out.shape[1]
    return MultichannelBuffer(out[:, :n_out], frames.sample_rate)
