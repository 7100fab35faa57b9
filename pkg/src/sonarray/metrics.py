"""Objective separation metrics: band-limited SNR, log-spectral distortion
and attenuation during silence."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio import MultichannelBuffer, stft_analyze
from .geometry import angle_between

CAP_DB = 99.0
NARROWBAND = (300.0, 3400.0)


def band_limit(x, fs: float, band=NARROWBAND) -> np.ndarray:
    """Zero-phase brick-wall band-pass along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    X = np.fft.rfft(x, axis=-1)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    X[..., (f < band[0]) | (f > band[1])] = 0.0
    return np.fft.irfft(X, n=n, axis=-1)


def _check(est, ref):
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    return est, ref


def snr(estimate, reference, fs: float = 48000, band=NARROWBAND, cap: float = CAP_DB) -> float:
    """``10 log10(sum ref^2 / sum (est - ref)^2)`` after band-limiting both.

    ``band=None`` skips the band-pass.
    """
    est, ref = _check(estimate, reference)
    if band is not None:
        est, ref = band_limit(est, fs, band), band_limit(ref, fs, band)
    p_ref = float(np.sum(ref**2))
    if p_ref <= 0:
        raise ValueError("reference has zero energy")
    p_err = float(np.sum((est - ref) ** 2))
    if p_err <= p_ref * 10 ** (-cap / 10):
        return cap
    return float(min(10 * np.log10(p_ref / p_err), cap))


def lsd(estimate, reference, fs: float = 48000, frame_length: int = 1024, band=NARROWBAND,
        eps: float | None = None) -> float:
    """Mean over frames of the RMS log-spectral difference (dB).

    ``eps`` defaults to 1e-5 times the mean reference power in the band.
    """
    est, ref = _check(estimate, reference)
    S = np.abs(stft_analyze(MultichannelBuffer(ref[None], int(fs)), frame_length).frames[0]) ** 2
    E = np.abs(stft_analyze(MultichannelBuffer(est[None], int(fs)), frame_length).frames[0]) ** 2
    f = np.fft.rfftfreq(frame_length, 1.0 / fs)
    keep = np.ones(len(f), bool) if band is None else (f >= band[0]) & (f <= band[1])
    S, E = S[:, keep], E[:, keep]
    if eps is None:
        eps = 1e-5 * float(S.mean())
    if eps <= 0:
        return 0.0
    d = 10 * np.log10(np.maximum(S, eps) / np.maximum(E, eps))
    return float(np.mean(np.sqrt(np.mean(d**2, axis=1))))


def attenuation(processed, unprocessed, silence, cap: float = CAP_DB) -> float:
    """``10 log10(P_in / P_out)`` over the samples flagged in ``silence``."""
    out, inp = _check(processed, unprocessed)
    silence = np.asarray(silence, dtype=bool)
    if silence.shape != out.shape[-1:]:
        raise ValueError("silence mask must match the signal length")
    if not silence.any():
        raise ValueError("empty silence set")
    p_in = float(np.sum(inp[..., silence] ** 2))
    p_out = float(np.sum(out[..., silence] ** 2))
    if p_in <= 0:
        raise ValueError("input has zero energy during silence")
    if p_out <= p_in * 10 ** (-cap / 10):
        return cap
    return float(min(10 * np.log10(p_in / p_out), cap))


def silence_mask(active, guard: int = 0) -> np.ndarray:
    """Samples where a source is inactive, at least ``guard`` samples from activity."""
    active = np.asarray(active, dtype=bool)
    if guard > 0:
        kernel = np.ones(2 * guard + 1)
        active = np.convolve(active.astype(float), kernel, mode="same") > 0
    return ~active


def match_tracks(records, truth) -> dict[int, int]:
    """Assign each track id to the ground-truth source it stays closest to."""
    by_id: dict[int, list] = {}
    for r in records:
        by_id.setdefault(r.track_id, []).append(r)
    out = {}
    for tid, rows in by_id.items():
        times = np.array([r.time for r in rows])
        est = np.array([r.direction for r in rows])
        dirs = truth.directions_at(times)
        err = [float(np.mean(angle_between(est, dirs[s]))) for s in range(dirs.shape[0])]
        out[tid] = int(np.argmin(err))
    return out


@dataclass
class SourceScore:
    source_id: int
    track_id: int
    snr_db: float
    lsd_db: float
    attenuation_db: float | None
    input_snr_db: float | None = None


@dataclass
class EvalReport:
    scores: list = field(default_factory=list)
    band_hz: tuple = NARROWBAND

    def mean(self, name: str) -> float:
        vals = [getattr(s, name) for s in self.scores if getattr(s, name) is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def to_json(self) -> str:
        return json.dumps({"band_hz": list(self.band_hz), "sources": [asdict(s) for s in self.scores]}, indent=2)

    def write_csv(self, path) -> None:
        names = list(SourceScore.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for s in self.scores:
                w.writerow(["" if getattr(s, n) is None else getattr(s, n) for n in names])


class TruthTable:
    """Ground truth read back from ``truth.csv`` (per-frame rows)."""

    def __init__(self, table: dict, hop: int = 512, frame_length: int = 1024, fs: float = 48000):
        from .geometry import direction

        self.ids = sorted(table)
        self.times = table[self.ids[0]]["time_s"] if self.ids else np.zeros(0)
        self.dirs = np.stack([direction(table[s]["azimuth_deg"], table[s]["elevation_deg"]) for s in self.ids]) \
            if self.ids else np.zeros((0, 0, 3))
        self.activity = np.stack([table[s]["active"] for s in self.ids]) if self.ids else np.zeros((0, 0))
        self.hop, self.frame_length, self.fs = hop, frame_length, fs

    @classmethod
    def read(cls, path, **kw) -> "TruthTable":
        from .simulator.scene import read_truth_csv

        return cls(read_truth_csv(path), **kw)

    @property
    def n_sources(self) -> int:
        return len(self.ids)

    def directions_at(self, times) -> np.ndarray:
        """Directions of the nearest tabulated frame, ``(sources, T, 3)``."""
        idx = np.searchsorted(self.times, np.asarray(times, dtype=float))
        idx = np.clip(idx, 0, len(self.times) - 1)
        return self.dirs[:, idx]

    def sample_activity(self, n_samples: int) -> np.ndarray:
        """Samples covered by at least one frame with activity, ``(sources, n)``."""
        out = np.zeros((self.n_sources, n_samples), dtype=bool)
        for f in range(self.activity.shape[1]):
            a, b = f * self.hop, min(f * self.hop + self.frame_length, n_samples)
            out[:, a:b] |= self.activity[:, f, None] > 0
        return out
