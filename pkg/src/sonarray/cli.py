"""Command-line front end.

Every stage reads and writes plain files so that any step can be rerun on
its own::

    sonarray simulate --fixture three-static --out run/
    sonarray localize run/mixture.wav --out run/
    sonarray separate run/mixture.wav --tracks run/tracks.csv --out run/ \
        --stems run/stem_*.wav --truth run/truth.csv
    sonarray featurize run/track_0.wav --diagnostics run/pf_0.csv --out run/
    sonarray eval --manifest run/separation.json --mixture run/mixture.wav \
        --stems run/stem_*.wav --truth run/truth.csv

Failures exit nonzero and print one JSON line ``{"error": ..., "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .audio import MultichannelBuffer, WavError, read_wav, write_wav

logger = logging.getLogger("sonarray")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _error_line(code: str, message: str) -> str:
    return json.dumps({"error": code, "message": message})


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(_error_line("usage", message), file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _read_mixture(path, cfg) -> MultichannelBuffer:
    buf = read_wav(path)
    if buf.channel_count != len(cfg.mic_positions):
        raise CliError(
            "geometry",
            f"{path} has {buf.channel_count} channels but the array has {len(cfg.mic_positions)} microphones",
        )
    if buf.sample_rate != cfg.sample_rate:
        raise CliError("sample_rate", f"{path} is {buf.sample_rate} Hz; config expects {cfg.sample_rate} Hz")
    return buf


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> dict:
    from .simulator import get_fixture, load_scene, synthesize_scene, write_outputs

    cfg = _config(args)
    if (args.fixture is None) == (args.scene is None):
        raise CliError("usage", "give exactly one of --fixture or --scene")
    if args.fixture is not None:
        try:
            spec = get_fixture(args.fixture)
        except KeyError as exc:
            raise CliError("unknown_fixture", exc.args[0]) from None
    else:
        spec = load_scene(args.scene)
    mix, truth = synthesize_scene(spec, cfg.seed)
    paths = write_outputs(args.out, mix, truth)
    return {"files": [str(p) for p in paths], "sources": truth.n_sources, "seed": cfg.seed}


# --- localize ----------------------------------------------------------------


def cmd_localize(args) -> dict:
    from .localization.search import write_detections
    from .pipeline import localize_and_track, write_tracks

    cfg = _config(args)
    buf = _read_mixture(args.mixture, cfg)
    out = _out_dir(args.out)
    det, records = localize_and_track(
        buf, cfg.mic_positions, cfg.localization, cfg.tracker_config(), cfg.seed, args.grid_cache
    )
    write_detections(out / "detections.csv", [(d.frame_index, d.sources) for d in det])
    write_tracks(out / "tracks.csv", records)
    ids = sorted({r.track_id for r in records})
    return {"detections": str(out / "detections.csv"), "tracks": str(out / "tracks.csv"), "track_ids": ids}


# --- separate ----------------------------------------------------------------


def _read_stems(paths, n_samples: int) -> np.ndarray:
    stems = []
    for p in paths:
        b = read_wav(p)
        if b.n_samples != n_samples:
            raise CliError("length_mismatch", f"{p} has {b.n_samples} samples, mixture has {n_samples}")
        stems.append(b.samples)
    return np.stack(stems)


def cmd_separate(args) -> dict:
    from .metrics import TruthTable, match_tracks
    from .pipeline import localize_and_track, read_tracks, separate, write_diagnostics
    from .postfilter import PostfilterConfig

    cfg = _config(args)
    buf = _read_mixture(args.mixture, cfg)
    if args.tracks is None and not args.live:
        raise CliError("missing_tracks", "give --tracks FILE or --live")
    if args.tracks is not None:
        if not Path(args.tracks).exists():
            raise CliError("missing_tracks", f"tracks file not found: {args.tracks}")
        records = read_tracks(args.tracks)
    else:
        _, records = localize_and_track(buf, cfg.mic_positions, cfg.localization, cfg.tracker_config(), cfg.seed)

    sep_cfg = cfg.separation
    if args.delay_and_sum:
        sep_cfg = dataclasses.replace(sep_cfg, adapt=False)
    pf_cfg = cfg.postfilter
    if args.single_source_pf:
        pf_cfg = PostfilterConfig.single_source(**{
            k: v for k, v in dataclasses.asdict(pf_cfg).items() if k not in ("eta", "reverb")
        })
    if args.reverb is not None:
        pf_cfg = dataclasses.replace(pf_cfg, reverb=args.reverb == "on")

    refs = _read_stems(args.stems, buf.n_samples) if args.stems else None
    if args.truth and not args.stems:
        raise CliError("usage", "--truth needs --stems")
    match = {}
    if args.truth:
        truth = TruthTable.read(args.truth, hop=cfg.frame_length // 2, frame_length=cfg.frame_length,
                                fs=cfg.sample_rate)
        if len(args.stems) < truth.n_sources:
            raise CliError("truth_mismatch",
                           f"{args.truth} lists {truth.n_sources} sources, got {len(args.stems)} stems")
        match = match_tracks(records, truth)
    postfilter = not args.no_postfilter
    res = separate(
        buf, cfg.mic_positions, records, sep_cfg, pf_cfg, postfilter=postfilter,
        frame_length=cfg.frame_length, references=refs, diagnostics=postfilter and args.diagnostics,
        speed_of_sound=cfg.speed_of_sound, block=cfg.localization.block,
    )
    out = _out_dir(args.out)
    manifest = {"sample_rate": buf.sample_rate, "frame_length": cfg.frame_length,
                "postfilter": postfilter, "tracks": []}
    for i, tid in enumerate(res.track_ids):
        entry = {"track_id": int(tid), "output": f"track_{tid}.wav",
                 "first_sample": int(res.first_frame.get(tid, 0) * (cfg.frame_length // 2))}
        write_wav(out / entry["output"], MultichannelBuffer(res.output[i], buf.sample_rate))
        if tid in res.diagnostics:
            entry["diagnostics"] = f"pf_{tid}.csv"
            write_diagnostics(out / entry["diagnostics"], res.diagnostics[tid])
        if res.references is not None:
            entry["references"] = f"ref_{tid}.wav"
            write_wav(out / entry["references"], MultichannelBuffer(res.references[i], buf.sample_rate))
        if tid in match:
            entry["source"] = match[tid]
        manifest["tracks"].append(entry)
    with open(out / "separation.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return {"manifest": str(out / "separation.json"), "track_ids": [int(t) for t in res.track_ids]}


# --- featurize ---------------------------------------------------------------


def cmd_featurize(args) -> dict:
    from .features import masks_from_diagnostics, mel_features, to_feature_rate, write_matrix
    from .pipeline import read_diagnostics

    cfg = _config(args)
    if args.diagnostics is None or not Path(args.diagnostics).exists():
        raise CliError("missing_diagnostics", f"post-filter diagnostics not found: {args.diagnostics}")
    audio = read_wav(args.audio)
    if audio.channel_count != 1:
        raise CliError("channels", f"{args.audio} must be mono, has {audio.channel_count} channels")
    diag = read_diagnostics(args.diagnostics)
    feats = mel_features(to_feature_rate(audio.samples[0], audio.sample_rate))
    mask = masks_from_diagnostics(diag, audio.sample_rate, cfg.frame_length, audio.n_samples,
                                  n_feature_frames=feats.n_frames, threshold=cfg.t_mask)
    out = _out_dir(args.out)
    stem = Path(args.audio).stem
    files = {
        "features": out / f"{stem}.features.txt",
        "mask": out / f"{stem}.mask.txt",
        "continuous_mask": out / f"{stem}.cmask.txt",
    }
    write_matrix(files["features"], feats.matrix(), "%.6f")
    write_matrix(files["mask"], mask.matrix(), "%d")
    write_matrix(files["continuous_mask"], mask.continuous, "%.6e")
    return {k: str(v) for k, v in files.items()} | {"frames": feats.n_frames}


# --- eval --------------------------------------------------------------------


def _eval_pairs(args):
    from .metrics import EvalReport, SourceScore, lsd, snr

    if len(args.estimates) != len(args.references):
        raise CliError("usage", "--estimates and --references need the same number of files")
    report = EvalReport()
    for k, (e, r) in enumerate(zip(args.estimates, args.references)):
        est, ref = read_wav(e), read_wav(r)
        if est.sample_rate != ref.sample_rate:
            raise CliError("sample_rate", f"{e} and {r} differ in sample rate")
        if est.samples.shape != ref.samples.shape:
            raise CliError("length_mismatch", f"{e} {est.samples.shape} vs {r} {ref.samples.shape}")
        fs = est.sample_rate
        report.scores.append(SourceScore(k, k, snr(est.samples[0], ref.samples[0], fs),
                                         lsd(est.samples[0], ref.samples[0], fs), None))
    return report


def _eval_manifest(args):
    from .metrics import EvalReport, SourceScore, TruthTable, attenuation, lsd, silence_mask, snr

    if not (args.mixture and args.stems and args.truth):
        raise CliError("usage", "--manifest needs --mixture, --stems and --truth")
    base = Path(args.manifest).parent
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    mix = read_wav(args.mixture)
    fs = mix.sample_rate
    stems = _read_stems(args.stems, mix.n_samples)
    L = manifest.get("frame_length", 1024)
    truth = TruthTable.read(args.truth, hop=L // 2, frame_length=L, fs=fs)
    active = truth.sample_activity(mix.n_samples)
    report = EvalReport()
    for entry in manifest["tracks"]:
        if "source" not in entry or "references" not in entry:
            logger.warning("track %s has no matched reference; skipped", entry["track_id"])
            continue
        s = entry["source"]
        est = read_wav(base / entry["output"]).samples[0]
        ref = read_wav(base / entry["references"]).samples[s]
        if len(est) != mix.n_samples:
            raise CliError("length_mismatch", f"{entry['output']} length differs from the mixture")
        sl = slice(entry.get("first_sample", 0) + L, None)
        best_mic = max(snr(mix.samples[m][sl], stems[s, m][sl], fs) for m in range(mix.channel_count))
        sil = silence_mask(active[s])
        sil[: sl.start] = False
        att = attenuation(est, mix.samples[0], sil) if sil.any() else None
        report.scores.append(SourceScore(s, entry["track_id"], snr(est[sl], ref[sl], fs),
                                         lsd(est[sl], ref[sl], fs), att, best_mic))
    return report


def cmd_eval(args) -> dict:
    if args.manifest is None and not args.estimates:
        raise CliError("usage", "give --manifest or --estimates/--references")
    report = _eval_manifest(args) if args.manifest else _eval_pairs(args)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        if out.suffix == ".csv":
            report.write_csv(out)
        else:
            out.write_text(report.to_json())
    summary = {"mean_snr_db": report.mean("snr_db"), "mean_lsd_db": report.mean("lsd_db")}
    if any(s.input_snr_db is not None for s in report.scores):
        summary["mean_snr_gain_db"] = float(np.mean([s.snr_db - s.input_snr_db for s in report.scores]))
    if any(s.attenuation_db is not None for s in report.scores):
        summary["mean_attenuation_db"] = report.mean("attenuation_db")
    return summary | {"sources": [dataclasses.asdict(s) for s in report.scores]}


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, suppress: bool):
        # Subcommands accept the same flags; SUPPRESS keeps them from
        # overwriting values given before the subcommand name.
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--config", default=d(None),
                            help="YAML run configuration (must define array.mic_positions)")
        parser.add_argument("--seed", type=int, default=d(None), help="overrides the configured seed")
        parser.add_argument("--verbose", "-v", action="count", default=d(0), help="repeat for more detail")
        return parser

    common = global_flags(argparse.ArgumentParser(add_help=False), suppress=True)
    p = global_flags(_Parser(prog="sonarray", description=__doc__.split("\n\n")[0]), suppress=False)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="render a fixture or scene file")
    s.add_argument("--fixture", help="named fixture, e.g. three-static")
    s.add_argument("--scene", help="scene YAML")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("localize", parents=[common], help="detections.csv and tracks.csv from a mixture")
    s.add_argument("mixture")
    s.add_argument("--out", required=True)
    s.add_argument("--grid-cache", help="file used to cache the direction grid")
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("separate", parents=[common], help="one WAV per track plus post-filter diagnostics")
    s.add_argument("mixture")
    s.add_argument("--tracks", help="tracks.csv from localize")
    s.add_argument("--live", action="store_true", help="localise and track in-process")
    s.add_argument("--out", required=True)
    s.add_argument("--no-postfilter", action="store_true", help="GSS output only")
    s.add_argument("--single-source-pf", action="store_true", help="post-filter without the leakage term")
    s.add_argument("--delay-and-sum", action="store_true", help="freeze the demixing matrices")
    s.add_argument("--reverb", choices=("on", "off"), help="reverberation term of the post-filter")
    s.add_argument("--no-diagnostics", dest="diagnostics", action="store_false",
                   help="skip the pf_<id>.csv files")
    s.add_argument("--stems", nargs="+", help="clean multichannel stems passed through the same demixing")
    s.add_argument("--truth", help="truth.csv; records which stem each track follows")
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("featurize", parents=[common], help="features and missing-feature masks")
    s.add_argument("audio", help="separated mono WAV")
    s.add_argument("--diagnostics", help="pf_<id>.csv written by separate")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("eval", parents=[common], help="SNR, LSD and attenuation")
    s.add_argument("--manifest", help="separation.json written by separate")
    s.add_argument("--mixture")
    s.add_argument("--stems", nargs="+")
    s.add_argument("--truth")
    s.add_argument("--estimates", nargs="+", help="mono estimates (paired mode)")
    s.add_argument("--references", nargs="+", help="mono references (paired mode)")
    s.add_argument("--out", help="report path (.json or .csv)")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    from .config import ConfigError

    try:
        result = args.func(args)
    except CliError as exc:
        print(_error_line(exc.code, str(exc)), file=sys.stderr)
        return EXIT_FAILURE
    except ConfigError as exc:
        print(_error_line("config", str(exc)), file=sys.stderr)
        return EXIT_FAILURE
    except (WavError, FileNotFoundError) as exc:
        print(_error_line("io", str(exc)), file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        print(_error_line("invalid_input", str(exc)), file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
