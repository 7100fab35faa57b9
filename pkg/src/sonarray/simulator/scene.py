"""Scene description and rendering of array recordings with exact ground truth."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.signal import fftconvolve

from ..audio import MultichannelBuffer, read_wav
from ..geometry import CUBE_ARRAY, SPEED_OF_SOUND, azimuth_elevation, centred, direction, unit
from . import signals

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """Piecewise-linear path through time-stamped waypoints.

    ``points`` are unit directions for far-field sources, or positions in
    metres (relative to the array centre) otherwise.
    """

    times: np.ndarray
    points: np.ndarray
    far_field: bool = True

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(self.times) != len(self.points):
            raise ValueError("times and points differ in length")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("trajectory times must be sorted")
        if self.far_field:
            norms = np.linalg.norm(self.points, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                logger.warning("far-field trajectory points not on the unit sphere; normalising")
                self.points = unit(self.points)

    @classmethod
    def static(cls, azimuth_deg: float, elevation_deg: float = 0.0, distance: float | None = None):
        u = direction(azimuth_deg, elevation_deg)
        if distance is None:
            return cls([0.0], [u], True)
        return cls([0.0], [u * distance], False)

    @classmethod
    def from_angles(cls, times, azimuth_deg, elevation_deg=0.0, distance: float | None = None):
        times = np.asarray(times, dtype=float)
        az, el = np.broadcast_arrays(np.asarray(azimuth_deg, float), np.asarray(elevation_deg, float))
        u = direction(az, el).reshape(-1, 3)
        if distance is None:
            return cls(times, u, True)
        return cls(times, u * distance, False)

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Directions ``(T, 3)`` and distances ``(T,)`` (``inf`` when far-field)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if len(self.times) == 1:
            pts = np.repeat(self.points, len(t), axis=0)
        else:
            pts = np.stack([np.interp(t, self.times, self.points[:, k]) for k in range(3)], axis=1)
        if self.far_field:
            return unit(pts), np.full(len(t), np.inf)
        dist = np.linalg.norm(pts, axis=1)
        return unit(pts), dist


@dataclass
class SourceSpec:
    trajectory: Trajectory
    signal: str = "speech"
    level_db: float = -26.0
    params: dict = field(default_factory=dict)
    samples: np.ndarray | None = None
    window: tuple | None = None  # (start_s, stop_s); silent outside


@dataclass
class SceneSpec:
    sources: list
    duration: float
    mic_positions: np.ndarray = field(default_factory=lambda: CUBE_ARRAY.copy())
    fs: int = 48000
    noise_db: float | None = -50.0
    t60: float = 0.0
    srr: float = 3.3
    c: float = SPEED_OF_SOUND
    integer_delays: bool = False
    mic_gains: np.ndarray | None = None
    reverb_predelay: float = 0.002

    def __post_init__(self):
        self.mic_positions = np.asarray(self.mic_positions, dtype=float)
        if self.t60 < 0:
            raise ValueError("T60 must be >= 0")
        if self.duration <= 0 or self.fs <= 0:
            raise ValueError("duration and fs must be positive")
        for s in self.sources:
            if not np.isfinite(s.level_db):
                raise ValueError("source levels must be finite")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.fs))


@dataclass
class GroundTruth:
    stems: np.ndarray  # (sources, mics, samples): direct + reverberation
    direct: np.ndarray  # (sources, mics, samples)
    noise: np.ndarray  # (mics, samples)
    active: np.ndarray  # (sources, samples) bool
    trajectories: list
    fs: int
    source_signals: np.ndarray = field(repr=False, default=None)

    @property
    def n_sources(self) -> int:
        return self.stems.shape[0]

    def frame_times(self, hop: int = 512, L: int = 1024) -> np.ndarray:
        n = self.stems.shape[-1]
        n_frames = max(1, -(-(n - L) // hop) + 1)
        return (np.arange(n_frames) * hop + L / 2) / self.fs

    def directions_at(self, times) -> np.ndarray:
        """``(sources, T, 3)`` true directions."""
        return np.stack([tr.at(times)[0] for tr in self.trajectories])

    def frame_activity(self, hop: int = 512, L: int = 1024) -> np.ndarray:
        """Fraction of each frame during which each source is active."""
        n = self.active.shape[1]
        n_frames = len(self.frame_times(hop, L))
        padded = np.zeros((self.active.shape[0], (n_frames - 1) * hop + L))
        padded[:, :n] = self.active
        idx = np.arange(n_frames)[:, None] * hop + np.arange(L)[None, :]
        return padded[:, idx].mean(axis=-1)


def _mic_delays(directions, distances, mics, fs, c) -> np.ndarray:
    """Delay (samples) from the array centre to each microphone, ``(T, mics)``."""
    far = ~np.isfinite(distances)
    out = np.empty((len(directions), len(mics)))
    if np.any(far):
        out[far] = -(fs / c) * directions[far] @ mics.T
    if np.any(~far):
        pts = directions[~far] * distances[~far, None]
        out[~far] = (fs / c) * (
            np.linalg.norm(pts[:, None, :] - mics[None], axis=-1) - distances[~far, None]
        )
    return out


def render_source(
    x: np.ndarray,
    trajectory: Trajectory,
    mics: np.ndarray,
    fs: float,
    c: float = SPEED_OF_SOUND,
    integer_delays: bool = False,
    block: int = 512,
    margin: int = 256,
) -> np.ndarray:
    """Delay ``x`` to every microphone, block by block.

    Hann-windowed blocks at 50% overlap are shifted by a frequency-domain
    phase ramp evaluated at the block centre and overlap-added, which
    crossfades the delay for moving sources.
    """
    n = len(x)
    hop = block // 2
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(block) / block)
    n_blocks = n // hop + 2
    nfft = block + 2 * margin
    padded = np.zeros((n_blocks + 1) * hop + block)
    padded[hop : hop + n] = x  # first block starts one hop before sample 0
    centres = (np.arange(n_blocks) * hop - hop + block / 2) / fs
    dirs, dists = trajectory.at(np.clip(centres, 0.0, None))
    delays = _mic_delays(dirs, dists, mics, fs, c)
    if integer_delays:
        delays = np.rint(delays)
    if np.max(np.abs(delays)) > margin - 32:
        raise ValueError("source too close or array too large for the delay margin")
    k = np.fft.rfftfreq(nfft) * nfft
    out = np.zeros((len(mics), len(padded) + 2 * margin))
    chunk = 256
    for b0 in range(0, n_blocks, chunk):
        b = np.arange(b0, min(n_blocks, b0 + chunk))
        idx = b[:, None] * hop + np.arange(block)[None, :]
        grains = np.zeros((len(b), nfft))
        grains[:, margin : margin + block] = padded[idx] * win
        G = np.fft.rfft(grains, axis=-1)
        phase = np.exp(-2j * np.pi * k[None, None, :] * delays[b][:, :, None] / nfft)
        shifted = np.fft.irfft(G[:, None, :] * phase, n=nfft, axis=-1)  # (blocks, mics, nfft)
        for m in range(len(b)):
            s = b[m] * hop
            out[:, s : s + nfft] += shifted[m]
    # undo the leading hop and the margin offset
    return out[:, margin + hop : margin + hop + n]


def reverb_kernel(t60: float, srr: float, fs: float, rng: np.random.Generator, predelay: float = 0.002) -> np.ndarray:
    """Exponentially decaying Gaussian noise with energy ``1/srr``.

    Energy falls by 60 dB over ``t60`` seconds.
    """
    n = int(np.ceil(1.2 * t60 * fs))
    pre = int(round(predelay * fs))
    env = 10.0 ** (-3.0 * np.arange(n) / (t60 * fs))
    h = np.concatenate([np.zeros(pre), rng.standard_normal(n) * env])
    return h / np.sqrt(np.sum(h**2) * srr)


def _load_signal(src: SourceSpec, spec: SceneSpec, rng: np.random.Generator):
    n = spec.n_samples
    if src.samples is not None:
        x = np.asarray(src.samples, dtype=float)
        active = np.abs(x) > 0
    elif src.signal in signals.GENERATORS:
        x, active = signals.GENERATORS[src.signal](spec.duration, spec.fs, rng, **src.params)
    else:
        buf = read_wav(src.signal)
        x = buf.samples[0]
        if buf.sample_rate != spec.fs:
            raise ValueError(f"{src.signal}: sample rate {buf.sample_rate} != {spec.fs}")
        frame = int(0.02 * spec.fs)
        e = np.convolve(x**2, np.ones(frame) / frame, mode="same")
        active = e > 1e-4 * np.max(e) if np.max(e) > 0 else np.zeros(len(x), dtype=bool)
    x = np.pad(x[:n], (0, max(0, n - len(x))))
    active = np.pad(active[:n], (0, max(0, n - len(active))))
    if src.window is not None:
        t = np.arange(n) / spec.fs
        outside = (t < src.window[0]) | (t >= src.window[1])
        x = np.where(outside, 0.0, x)
        active = active & ~outside
    rms = np.sqrt(np.mean(x[active] ** 2)) if np.any(active) else 0.0
    if rms > 0:
        x = x / rms * 10.0 ** (src.level_db / 20.0)
    return x, active


def synthesize_scene(spec: SceneSpec, seed: int = 0) -> tuple[MultichannelBuffer, GroundTruth]:
    """Render every source to every microphone and add diffuse noise."""
    mics = centred(spec.mic_positions)
    n_mics = len(mics)
    n = spec.n_samples
    seeds = np.random.SeedSequence(seed).spawn(len(spec.sources) + 1)
    gains = np.ones(n_mics) if spec.mic_gains is None else np.asarray(spec.mic_gains, float)

    stems = np.zeros((len(spec.sources), n_mics, n))
    direct = np.zeros_like(stems)
    active = np.zeros((len(spec.sources), n), dtype=bool)
    raw = np.zeros((len(spec.sources), n))
    for s, (src, ss) in enumerate(zip(spec.sources, seeds[:-1])):
        sig_rng, rev_rng = (np.random.default_rng(c) for c in ss.spawn(2))
        x, act = _load_signal(src, spec, sig_rng)
        raw[s] = x
        active[s] = act
        d = render_source(x, src.trajectory, mics, spec.fs, spec.c, spec.integer_delays)
        d *= gains[:, None]
        direct[s] = d
        stems[s] = d
        if spec.t60 > 0:
            for m in range(n_mics):
                h = reverb_kernel(spec.t60, spec.srr, spec.fs, rev_rng, spec.reverb_predelay)
                stems[s, m] += gains[m] * fftconvolve(x, h)[:n]

    noise_rng = np.random.default_rng(seeds[-1])
    if spec.noise_db is None:
        noise = np.zeros((n_mics, n))
    else:
        noise = signals.pink_noise((n_mics, n), spec.fs, noise_rng) * 10.0 ** (spec.noise_db / 20.0)
    mixture = stems.sum(axis=0) + noise
    truth = GroundTruth(
        stems=stems,
        direct=direct,
        noise=noise,
        active=active,
        trajectories=[s.trajectory for s in spec.sources],
        fs=spec.fs,
        source_signals=raw,
    )
    return MultichannelBuffer(mixture, spec.fs), truth


def write_truth_csv(path, truth: GroundTruth, hop: int = 512, L: int = 1024) -> None:
    """CSV: time_s, source_id, azimuth_deg, elevation_deg, distance_m, active."""
    times = truth.frame_times(hop, L)
    act = truth.frame_activity(hop, L)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "source_id", "azimuth_deg", "elevation_deg", "distance_m", "active"])
        for s, tr in enumerate(truth.trajectories):
            dirs, dists = tr.at(times)
            az, el = azimuth_elevation(dirs)
            for f in range(len(times)):
                dist = "inf" if not np.isfinite(dists[f]) else f"{dists[f]:.4f}"
                w.writerow([f"{times[f]:.6f}", s, f"{az[f]:.4f}", f"{el[f]:.4f}", dist, f"{act[s, f]:.3f}"])


def read_truth_csv(path) -> dict[int, dict[str, np.ndarray]]:
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(int(r["source_id"]), []).append(
                (float(r["time_s"]), float(r["azimuth_deg"]), float(r["elevation_deg"]),
                 float(r["distance_m"]), float(r.get("active", 1.0)))
            )
    out = {}
    for sid, vals in rows.items():
        a = np.array(vals)
        out[sid] = {"time_s": a[:, 0], "azimuth_deg": a[:, 1], "elevation_deg": a[:, 2],
                    "distance_m": a[:, 3], "active": a[:, 4]}
    return out


def _window(w):
    if w is None:
        return None
    start, stop = (float(v) for v in w)
    if not stop > start:
        raise ValueError("source window must have stop > start")
    return (start, stop)


def scene_from_dict(d: dict) -> SceneSpec:
    """Build a :class:`SceneSpec` from its YAML/dict form.

    Sources take ``static: [az, el]`` or ``waypoints: [[t, az, el], ...]``
    plus an optional ``distance``.
    """
    known = {"sources", "duration", "mic_positions", "fs", "noise_db", "t60", "srr", "c",
             "integer_delays", "mic_gains", "reverb_predelay"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scene keys: {sorted(unknown)}")
    sources = []
    for s in d.get("sources", []):
        dist = s.get("distance")
        if "static" in s:
            az, el = s["static"]
            tr = Trajectory.static(az, el, dist)
        elif "waypoints" in s:
            w = np.asarray(s["waypoints"], dtype=float)
            tr = Trajectory.from_angles(w[:, 0], w[:, 1], w[:, 2], dist)
        else:
            raise ValueError("source needs 'static' or 'waypoints'")
        sources.append(SourceSpec(tr, s.get("signal", "speech"), float(s.get("level_db", -26.0)),
                                  dict(s.get("params", {})), window=_window(s.get("window"))))
    kw = {k: d[k] for k in known - {"sources"} if k in d}
    if "mic_positions" in kw:
        kw["mic_positions"] = np.asarray(kw["mic_positions"], dtype=float)
    return SceneSpec(sources=sources, **kw)


def load_scene(path) -> SceneSpec:
    with open(path) as fh:
        return scene_from_dict(yaml.safe_load(fh))


def write_outputs(out_dir, mixture: MultichannelBuffer, truth: GroundTruth) -> list[Path]:
    """mixture.wav, stem_<k>.wav (per-mic images) and truth.csv."""
    from ..audio import write_wav

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "mixture.wav"]
    write_wav(paths[0], mixture)
    for s in range(truth.n_sources):
        p = out / f"stem_{s}.wav"
        write_wav(p, MultichannelBuffer(truth.stems[s], truth.fs))
        paths.append(p)
    p = out / "noise.wav"
    write_wav(p, MultichannelBuffer(truth.noise, truth.fs))
    paths.append(p)
    p = out / "truth.csv"
    write_truth_csv(p, truth)
    paths.append(p)
    return paths
