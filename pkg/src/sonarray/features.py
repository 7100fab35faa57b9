"""Recognition features and missing-feature masks.

Features are 24 smoothed log-Mel energies plus their time derivatives,
computed at 16 kHz.  Masks flag the bands the post-filter left reliable,
and :class:`DiagonalGmm` scores frames with unreliable dimensions
marginalised out.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, idct
from scipy.signal import resample_poly
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

FEATURE_FS = 16000
WINDOW = 400
HOP = 160
NFFT = 512
N_MELS = 24
KEEP_CEPSTRA = (1, 13)  # c1..c12 survive the lifter
T_MASK = 0.25
DELTA_CONTEXT = 2
LOG_FLOOR = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(freqs, n_mels: int = N_MELS, fmin: float = 0.0, fmax: float = 8000.0) -> np.ndarray:
    """Triangular HTK-scale filters evaluated at ``freqs`` (Hz), ``(n_mels, len(freqs))``."""
    freqs = np.asarray(freqs, dtype=float)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def frame_signal(x, window: int = WINDOW, hop: int = HOP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected mono audio")
    if len(x) < window:
        raise ValueError(f"audio shorter than one frame ({len(x)} < {window} samples)")
    n = 1 + (len(x) - window) // hop
    idx = np.arange(n)[:, None] * hop + np.arange(window)[None, :]
    return x[idx]


def log_mel_energies(x, fs: int = FEATURE_FS) -> np.ndarray:
    """``(frames, 24)`` log Mel energies from a Hamming-windowed 512-point FFT."""
    if fs != FEATURE_FS:
        raise ValueError(f"features expect {FEATURE_FS} Hz audio, got {fs}")
    frames = frame_signal(x) * np.hamming(WINDOW)
    power = np.abs(np.fft.rfft(frames, n=NFFT, axis=-1)) ** 2
    fb = mel_filterbank(np.fft.rfftfreq(NFFT, 1.0 / fs))
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def lifter(cepstra) -> np.ndarray:
    out = np.zeros_like(cepstra)
    a, b = KEEP_CEPSTRA
    out[..., a:b] = cepstra[..., a:b]
    return out


def smooth_log_mel(logmel, cms: bool = True) -> np.ndarray:
    """DCT, lifter, optional mean subtraction, and back to the log-Mel domain."""
    c = lifter(dct(np.asarray(logmel, dtype=float), type=2, norm="ortho", axis=-1))
    if cms:
        c = c - c.mean(axis=0, keepdims=True)
    return idct(c, type=2, norm="ortho", axis=-1)


def deltas(feats, context: int = DELTA_CONTEXT) -> np.ndarray:
    """Regression deltas over ``+-context`` frames with edge replication."""
    feats = np.asarray(feats, dtype=float)
    padded = np.pad(feats, ((context, context), (0, 0)), mode="edge")
    n = len(feats)
    num = sum(k * (padded[context + k : context + k + n] - padded[context - k : context - k + n])
              for k in range(1, context + 1))
    return num / (2 * sum(k * k for k in range(1, context + 1)))


@dataclass
class MelFeatures:
    static: np.ndarray  # (frames, 24)
    delta: np.ndarray  # (frames, 24)

    @property
    def n_frames(self) -> int:
        return len(self.static)

    def matrix(self) -> np.ndarray:
        return np.hstack([self.static, self.delta])


def mel_features(x, fs: int = FEATURE_FS, cms: bool = True) -> MelFeatures:
    static = smooth_log_mel(log_mel_energies(x, fs), cms)
    return MelFeatures(static, deltas(static))


def to_feature_rate(x, fs: int) -> np.ndarray:
    """Polyphase resampling of 48 kHz (or any integer multiple) audio to 16 kHz."""
    if fs == FEATURE_FS:
        return np.asarray(x, dtype=float)
    if fs % FEATURE_FS:
        raise ValueError(f"cannot decimate {fs} Hz by an integer factor to {FEATURE_FS} Hz")
    return resample_poly(np.asarray(x, dtype=float), 1, fs // FEATURE_FS)


# --- masks -----------------------------------------------------------------


@dataclass
class FeatureMask:
    continuous: np.ndarray  # (frames, 24)
    binary: np.ndarray  # (frames, 24) of {0, 1}
    delta: np.ndarray  # (frames, 24) of {0, 1}
    threshold: float = T_MASK

    def matrix(self) -> np.ndarray:
        return np.hstack([self.binary, self.delta]).astype(np.int8)


def continuous_mask(s_in, s_out, noise) -> np.ndarray:
    """``m = (S_out + N) / S_in``, defined as 1 where ``S_in = 0``."""
    s_in = np.asarray(s_in, dtype=float)
    num = np.asarray(s_out, dtype=float) + np.asarray(noise, dtype=float)
    out = np.ones(np.broadcast(s_in, num).shape)
    nz = np.broadcast_to(s_in > 0, out.shape)
    out[nz] = (np.broadcast_to(num, out.shape)[nz] / np.broadcast_to(s_in, out.shape)[nz])
    return out


def binary_mask(m, threshold: float = T_MASK) -> np.ndarray:
    return (np.asarray(m) > threshold).astype(np.int8)


def delta_mask(M, context: int = DELTA_CONTEXT) -> np.ndarray:
    """Product of the binary mask over ``+-context`` frames; zero at the edges."""
    M = np.asarray(M, dtype=np.int8)
    out = np.zeros_like(M)
    if M.ndim == 0:
        return out
    n = len(M)
    if n < 2 * context + 1:
        return out
    acc = np.ones_like(M[context : n - context])
    for k in range(-context, context + 1):
        acc = acc * M[context + k : n - context + k]
    out[context : n - context] = acc
    return out


def compute_mask(s_in, s_out, noise, threshold: float = T_MASK) -> FeatureMask:
    m = continuous_mask(s_in, s_out, noise)
    M = binary_mask(m, threshold)
    return FeatureMask(m, M, delta_mask(M), threshold)


def rebin_to_features(power, frames, fs: float, frame_length: int, n_samples: int,
                      n_feature_frames: int | None = None) -> np.ndarray:
    """Re-bin linear-frequency power ``(frames, bins)`` onto 16 kHz Mel frames.

    Each STFT frame spans one hop around its centre.  Mel energies are
    averaged over the frames overlapping each 25 ms feature window,
    weighted by the overlap.
    """
    power = np.asarray(power, dtype=float)
    frames = np.asarray(frames)
    hop = frame_length // 2
    freqs = np.fft.rfftfreq(frame_length, 1.0 / fs)
    if power.size == 0:
        power = np.zeros((0, len(freqs)))
    bands = power @ mel_filterbank(freqs).T  # (pf_frames, 24)
    centres = (frames * hop + frame_length / 2) / fs
    start, stop = centres - hop / (2 * fs), centres + hop / (2 * fs)
    if n_feature_frames is None:
        n16 = int(round(n_samples * FEATURE_FS / fs))
        n_feature_frames = 1 + (n16 - WINDOW) // HOP
    t0 = np.arange(n_feature_frames) * HOP / FEATURE_FS
    t1 = t0 + WINDOW / FEATURE_FS
    overlap = np.clip(np.minimum(t1[:, None], stop[None]) - np.maximum(t0[:, None], start[None]), 0.0, None)
    weight = overlap.sum(axis=1, keepdims=True)
    out = np.zeros((n_feature_frames, bands.shape[1]))
    ok = weight[:, 0] > 0
    out[ok] = (overlap[ok] @ bands) / weight[ok]
    return out


def masks_from_diagnostics(diag: dict, fs: float, frame_length: int, n_samples: int,
                           n_feature_frames: int | None = None, threshold: float = T_MASK) -> FeatureMask:
    """Mask from post-filter input, output and stationary-noise estimates."""
    kw = dict(fs=fs, frame_length=frame_length, n_samples=n_samples, n_feature_frames=n_feature_frames)
    s_in = rebin_to_features(diag["s_in"], diag["frames"], **kw)
    s_out = rebin_to_features(diag["s_out"], diag["frames"], **kw)
    noise = rebin_to_features(diag["lambda_stat"], diag["frames"], **kw)
    return compute_mask(s_in, s_out, noise, threshold)


def write_matrix(path, data, fmt: str) -> None:
    np.savetxt(path, np.asarray(data), fmt=fmt, delimiter=" ")


# --- marginalised GMM scoring ----------------------------------------------


class EmptyMaskWarning(UserWarning):
    """All dimensions of a frame were marginalised."""


@dataclass
class DiagonalGmm:
    weights: np.ndarray  # (J,)
    means: np.ndarray  # (J, D)
    variances: np.ndarray  # (J, D)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=float))
        if self.means.shape != self.variances.shape or len(self.weights) != len(self.means):
            raise ValueError("inconsistent GMM dimensions")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0, atol=1e-9):
            raise ValueError("weights must be nonnegative and sum to one")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def drop(self, keep) -> "DiagonalGmm":
        keep = np.asarray(keep, dtype=bool)
        return DiagonalGmm(self.weights, self.means[:, keep], self.variances[:, keep])

    @classmethod
    def load(cls, path) -> "DiagonalGmm":
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["weights"], d["means"], d["variances"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"weights": self.weights.tolist(), "means": self.means.tolist(),
                       "variances": self.variances.tolist()}, fh, indent=1)


def mft_gmm_score(gmm: DiagonalGmm, x, mask=None) -> float:
    """Log-likelihood of one frame using only the dimensions with ``mask`` set."""
    x = np.asarray(x, dtype=float)
    if x.shape != (gmm.dim,):
        raise ValueError(f"expected {gmm.dim} features, got {x.shape}")
    reliable = np.ones(gmm.dim, bool) if mask is None else np.asarray(mask, dtype=bool)
    if not reliable.any():
        warnings.warn("no reliable features; frame scored as 0", EmptyMaskWarning, stacklevel=2)
        return 0.0
    mu, var = gmm.means[:, reliable], gmm.variances[:, reliable]
    d = x[reliable] - mu
    comp = -0.5 * np.sum(np.log(2 * np.pi * var) + d * d / var, axis=1)
    with np.errstate(divide="ignore"):
        logw = np.log(gmm.weights)
    return float(logsumexp(logw + comp))


def mft_score_sequence(gmm: DiagonalGmm, feats, masks) -> np.ndarray:
    return np.array([mft_gmm_score(gmm, f, m) for f, m in zip(feats, masks)])
