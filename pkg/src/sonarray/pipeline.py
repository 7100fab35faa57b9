"""End-to-end processing stages shared by the command line and the tests.

Stages exchange plain files: detections and tracks as CSV, separated
signals as WAV, post-filter diagnostics as CSV.  Every function here also
works on in-memory objects.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .audio import MultichannelBuffer, SpectralFrameSet, analysis_window, stft_analyze, istft_synthesize
from .geometry import SPEED_OF_SOUND, azimuth_elevation, centred, direction
from .localization.frontend import Detection, Localizer, LocalizerConfig
from .localization.noise import MCRA
from .postfilter import MultiSourcePostfilter, PostfilterConfig, init_noise
from .separation import GSSSeparator, SeparatorConfig
from .tracking import MultiSourceTracker, TrackerConfig

logger = logging.getLogger(__name__)

TRACK_FIELDS = ("frame", "time_s", "track_id", "azimuth_deg", "elevation_deg", "P_exist", "P_active", "delayed")


@dataclass
class TrackRecord:
    frame: int  # last STFT frame of the localisation block
    time: float
    track_id: int
    direction: np.ndarray
    delayed_direction: np.ndarray
    p_exist: float
    p_active: float


def block_period(loc: LocalizerConfig, fs: float) -> float:
    return loc.block * (loc.frame_length // 2) / fs


def localize_and_track(
    buf: MultichannelBuffer,
    mic_positions,
    loc_config: LocalizerConfig | None = None,
    trk_config: TrackerConfig | None = None,
    seed: int = 0,
    cache_path=None,
) -> tuple[list[Detection], list[TrackRecord]]:
    """Run the localiser and the tracker; returns detections and confirmed tracks."""
    loc_config = loc_config or LocalizerConfig()
    trk_config = trk_config or TrackerConfig(dt=block_period(loc_config, buf.sample_rate))
    loc = Localizer(mic_positions, buf.sample_rate, loc_config, cache_path=cache_path)
    detections = loc.run(buf)
    tracker = MultiSourceTracker(trk_config, seed)
    records = []
    for det in detections:
        ests = tracker.step(
            [s.direction for s in det.sources], [s.confidence for s in det.sources]
        )
        for e in ests:
            if e.confirmed:
                records.append(
                    TrackRecord(det.frame_index, det.time, e.track_id, e.direction,
                                e.delayed_direction, e.p_exist, e.p_active)
                )
    return detections, records


def write_tracks(path, records) -> None:
    """One row for the current and one for the delayed estimate of each track."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACK_FIELDS)
        for r in records:
            for delayed, u in ((0, r.direction), (1, r.delayed_direction)):
                az, el = azimuth_elevation(u)
                w.writerow([r.frame, f"{r.time:.6f}", r.track_id, f"{az:.4f}", f"{el:.4f}",
                            f"{r.p_exist:.6f}", f"{r.p_active:.6f}", delayed])


def read_tracks(path) -> list[TrackRecord]:
    rows: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACK_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"tracks file lacks columns {sorted(missing)}")
        for row in reader:
            key = (int(row["frame"]), int(row["track_id"]))
            u = direction(float(row["azimuth_deg"]), float(row["elevation_deg"]))
            rec = rows.get(key)
            if rec is None:
                rec = rows[key] = TrackRecord(key[0], float(row["time_s"]), key[1], u, u,
                                              float(row["P_exist"]), float(row["P_active"]))
            if int(row["delayed"]):
                rec.delayed_direction = u
            else:
                rec.direction = u
    return list(rows.values())


def track_schedule(records) -> dict[int, list[TrackRecord]]:
    """Group track records by the frame at which they become available."""
    out: dict[int, list[TrackRecord]] = {}
    for r in records:
        out.setdefault(r.frame, []).append(r)
    for v in out.values():
        v.sort(key=lambda r: r.track_id)
    return dict(sorted(out.items()))


@dataclass
class SeparationResult:
    track_ids: list
    output: np.ndarray  # (tracks, samples), post-filtered (or GSS if disabled)
    gss: np.ndarray  # (tracks, samples), GSS only
    references: np.ndarray | None  # (tracks, refs, samples): GSS applied to each reference stem
    diagnostics: dict = field(default_factory=dict)  # id -> dict of (frames, bins) arrays
    first_frame: dict = field(default_factory=dict)  # id -> first frame with output
    sample_rate: int = 48000


def separate(
    buf: MultichannelBuffer,
    mic_positions,
    records,
    sep_config: SeparatorConfig | None = None,
    pf_config: PostfilterConfig | None = None,
    postfilter: bool = True,
    frame_length: int = 1024,
    references=None,
    diagnostics: bool = False,
    speed_of_sound: float = SPEED_OF_SOUND,
    block: int = 4,
) -> SeparationResult:
    """GSS followed by the multi-source post-filter, one STFT frame at a time.

    Sources follow ``records`` causally: frame ``l`` uses the newest track
    set whose block ended at or before ``l``.  ``references`` is an optional
    ``(refs, mics, samples)`` array of clean stems that are passed through
    the same demixing matrices as the mixture.
    """
    fs = buf.sample_rate
    frames = stft_analyze(buf, frame_length)
    n_frames, n_bins = frames.n_frames, frames.n_bins
    ref_frames = None
    if references is not None:
        references = np.asarray(references, dtype=float)
        ref_frames = np.stack(
            [stft_analyze(MultichannelBuffer(r, fs), frame_length).frames for r in references]
        )
    schedule = track_schedule(records)
    ids = sorted({r.track_id for r in records})
    slot = {sid: i for i, sid in enumerate(ids)}
    Y_out = np.zeros((len(ids), n_frames, n_bins), dtype=complex)
    Y_gss = np.zeros_like(Y_out)
    Y_ref = None if ref_frames is None else np.zeros((len(ids), len(references), n_frames, n_bins), dtype=complex)
    diag_out: dict = {}
    first: dict = {}

    sep = GSSSeparator(centred(mic_positions), fs, frame_length, sep_config or SeparatorConfig(), speed_of_sound)
    pf = MultiSourcePostfilter(n_bins, fs, frame_length, pf_config or PostfilterConfig())
    mic_noise = MCRA((frames.n_channels, n_bins), window=pf.config.mcra_window)
    current: list[TrackRecord] = []
    for ell in range(n_frames):
        X = frames.frames[:, ell]
        mic_noise.update(np.abs(X) ** 2)
        if ell in schedule:
            current = schedule[ell]
        elif current and ell - current[0].frame >= block:
            current = []  # no confirmed track in the latest block
        sep.set_sources([(r.track_id, r.direction) for r in current])
        if not current:
            pf.process(np.zeros((0, n_bins)), [])
            continue
        W = sep.state.W
        y = sep.process(X, [r.p_active for r in current])
        track_ids = [r.track_id for r in current]
        if postfilter:
            res = pf.process(y, track_ids, init_floor=init_noise(mic_noise.noise), diagnostics=diagnostics)
            S, diag = res if diagnostics else (res, None)
        else:
            S, diag = y, None
        for m, sid in enumerate(track_ids):
            i = slot[sid]
            first.setdefault(sid, ell)
            Y_out[i, ell] = S[m]
            Y_gss[i, ell] = y[m]
            if diag is not None:
                d = diag_out.setdefault(sid, {})
                for key, val in diag.items():
                    d.setdefault(key, {})[ell] = val[m] if np.ndim(val) == 2 else val
        if Y_ref is not None:
            yr = np.einsum("kmn,rnk->rkm", W, ref_frames[:, :, ell])
            for m, sid in enumerate(track_ids):
                Y_ref[slot[sid], :, ell] = yr[:, :, m]

    def synth(spec):
        fs_set = SpectralFrameSet(spec, frame_length, fs, buf.n_samples, analysis_window(frame_length))
        return istft_synthesize(fs_set).samples

    empty = np.zeros((0, buf.n_samples))
    output = synth(Y_out) if ids else empty
    gss = synth(Y_gss) if ids else empty
    refs = None
    if Y_ref is not None:
        refs = np.stack([synth(Y_ref[i]) for i in range(len(ids))]) if ids else np.zeros((0, len(references), buf.n_samples))
    diag_arrays = {}
    for sid, d in diag_out.items():
        diag_arrays[sid] = {
            "frames": np.array(sorted(d["G"])),
            **{key: np.array([v[f] for f in sorted(v)]) for key, v in d.items()},
        }
    return SeparationResult(ids, output, gss, refs, diag_arrays, first, fs)


DIAG_COLUMNS = ("frame", "k", "lambda_stat", "lambda_leak", "lambda_rev", "xi", "p", "G", "s_in", "s_out")


def write_diagnostics(path, diag: dict) -> None:
    """Per-frame, per-bin post-filter diagnostics of one output as CSV."""
    frames = diag["frames"]
    n_bins = diag["G"].shape[1]
    cols = [np.repeat(frames, n_bins), np.tile(np.arange(n_bins), len(frames))]
    cols += [np.asarray(diag[name]).reshape(-1) for name in DIAG_COLUMNS[2:]]
    data = np.column_stack(cols)
    fmt = ["%d", "%d"] + ["%.6e"] * (len(DIAG_COLUMNS) - 2)
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=",".join(DIAG_COLUMNS), comments="")


def read_diagnostics(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        empty = not fh.read(1)
    if tuple(header) != DIAG_COLUMNS:
        raise ValueError(f"unexpected diagnostics header {header}")
    if empty:
        return {"frames": np.zeros(0, int), **{name: np.zeros((0, 0)) for name in DIAG_COLUMNS[2:]}}
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    frames = np.unique(data[:, 0].astype(int))
    n_bins = int(data[:, 1].max()) + 1
    out = {"frames": frames}
    for j, name in enumerate(DIAG_COLUMNS[2:], start=2):
        out[name] = data[:, j].reshape(len(frames), n_bins)
    return out
