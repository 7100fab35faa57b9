import json

import numpy as np
import pytest
import yaml

from sonarray.audio import MultichannelBuffer, read_wav, write_wav
from sonarray.cli import main
from sonarray.geometry import CUBE_ARRAY


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def ok(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out.strip().splitlines()[-1])


def error(capsys, *argv, code=1):
    rc, out, err = run(capsys, *argv)
    assert rc == code
    line = json.loads(err.strip().splitlines()[-1])
    assert set(line) == {"error", "message"}
    return line


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    """single-static rendered, localised and separated once for the module."""
    d = tmp_path_factory.mktemp("run")
    assert main(["simulate", "--fixture", "single-static", "--out", str(d), "--seed", "1"]) == 0
    assert main(["localize", str(d / "mixture.wav"), "--out", str(d)]) == 0
    stems = [str(d / "stem_0.wav")]
    common = [str(d / "mixture.wav"), "--tracks", str(d / "tracks.csv"), "--stems", *stems,
              "--truth", str(d / "truth.csv")]
    assert main(["separate", *common, "--out", str(d / "full")]) == 0
    assert main(["separate", *common, "--out", str(d / "gss"), "--no-postfilter"]) == 0
    return d


def test_simulate_writes_fixture_files(tmp_path, capsys):
    res = ok(capsys, "simulate", "--fixture", "three-static", "--out", tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["mixture.wav", "noise.wav", "stem_0.wav", "stem_1.wav", "stem_2.wav", "truth.csv"]
    assert res["sources"] == 3
    assert read_wav(tmp_path / "mixture.wav").channel_count == 8


def test_simulate_same_seed_same_bytes(tmp_path, capsys):
    for run_dir in ("a", "b"):
        ok(capsys, "--seed", 4, "simulate", "--fixture", "single-static", "--out", tmp_path / run_dir)
    for name in ("mixture.wav", "stem_0.wav", "truth.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_bad_fixture_lists_choices(tmp_path, capsys):
    line = error(capsys, "simulate", "--fixture", "nope", "--out", tmp_path)
    assert line["error"] == "unknown_fixture"
    assert "three-static" in line["message"]


def test_simulate_scene_file(tmp_path, capsys):
    p = tmp_path / "scene.yaml"
    p.write_text(yaml.safe_dump({"duration": 0.5, "sources": [{"static": [10, 0], "signal": "white"}]}))
    res = ok(capsys, "simulate", "--scene", p, "--out", tmp_path / "o")
    assert res["sources"] == 1
    error(capsys, "simulate", "--out", tmp_path / "o")


def test_localize_silence_gives_no_tracks(tmp_path, capsys):
    write_wav(tmp_path / "silence.wav", MultichannelBuffer(np.zeros((8, 48000)), 48000))
    res = ok(capsys, "localize", tmp_path / "silence.wav", "--out", tmp_path)
    assert res["track_ids"] == []
    assert (tmp_path / "tracks.csv").exists()
    assert (tmp_path / "detections.csv").exists()


def test_localize_three_static_finds_three_tracks(tmp_path, capsys):
    ok(capsys, "simulate", "--fixture", "three-static", "--out", tmp_path)
    res = ok(capsys, "localize", tmp_path / "mixture.wav", "--out", tmp_path)
    assert len(res["track_ids"]) == 3


def test_localize_missing_geometry(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\n")
    write_wav(tmp_path / "m.wav", MultichannelBuffer(np.zeros((8, 4800)), 48000))
    line = error(capsys, "--config", cfg, "localize", tmp_path / "m.wav", "--out", tmp_path)
    assert line["error"] == "config"


def test_localize_channel_count_checked(tmp_path, capsys):
    write_wav(tmp_path / "m.wav", MultichannelBuffer(np.zeros((4, 4800)), 48000))
    assert error(capsys, "localize", tmp_path / "m.wav", "--out", tmp_path)["error"] == "geometry"


def test_separate_outputs(scene):
    manifest = json.loads((scene / "full" / "separation.json").read_text())
    assert manifest["postfilter"] is True
    assert len(manifest["tracks"]) >= 1
    t = manifest["tracks"][0]
    assert t["source"] == 0
    out = read_wav(scene / "full" / t["output"])
    assert out.channel_count == 1
    assert out.n_samples == read_wav(scene / "mixture.wav").n_samples
    assert (scene / "full" / t["diagnostics"]).exists()
    assert "diagnostics" not in json.loads((scene / "gss" / "separation.json").read_text())["tracks"][0]


def test_separate_without_tracks(scene, tmp_path, capsys):
    line = error(capsys, "separate", scene / "mixture.wav", "--out", tmp_path)
    assert line["error"] == "missing_tracks"
    line = error(capsys, "separate", scene / "mixture.wav", "--tracks", tmp_path / "none.csv", "--out", tmp_path)
    assert line["error"] == "missing_tracks"


def _evaluate(capsys, scene, sub):
    return ok(capsys, "eval", "--manifest", scene / sub / "separation.json", "--mixture", scene / "mixture.wav",
              "--stems", scene / "stem_0.wav", "--truth", scene / "truth.csv",
              "--out", scene / sub / "report.json")


def test_postfilter_increases_silence_attenuation(scene, capsys):
    full = _evaluate(capsys, scene, "full")
    gss = _evaluate(capsys, scene, "gss")
    assert full["mean_attenuation_db"] > gss["mean_attenuation_db"]
    for key in ("mean_snr_db", "mean_lsd_db", "mean_snr_gain_db", "mean_attenuation_db"):
        assert np.isfinite(full[key])
    report = json.loads((scene / "full" / "report.json").read_text())
    s = report["sources"][0]
    assert all(s[k] is not None for k in ("snr_db", "lsd_db", "attenuation_db", "input_snr_db"))


def test_featurize_silence_mask_all_ones(scene, tmp_path, capsys):
    t = json.loads((scene / "full" / "separation.json").read_text())["tracks"][0]
    write_wav(tmp_path / "quiet.wav", MultichannelBuffer(np.zeros((1, 48000)), 48000))
    res = ok(capsys, "featurize", tmp_path / "quiet.wav", "--diagnostics", scene / "full" / t["diagnostics"],
             "--out", tmp_path)
    mask = np.loadtxt(res["mask"], ndmin=2)
    assert mask.shape == (res["frames"], 48)
    # Static columns all ones on silence; the delta columns lose only the two edge frames.
    assert mask[:, :24].all()
    assert mask[2:-2].all()
    assert np.loadtxt(res["features"], ndmin=2).shape == (res["frames"], 48)


def test_featurize_separated_track(scene, tmp_path, capsys):
    t = json.loads((scene / "full" / "separation.json").read_text())["tracks"][0]
    res = ok(capsys, "featurize", scene / "full" / t["output"], "--diagnostics", scene / "full" / t["diagnostics"],
             "--out", tmp_path)
    mask = np.loadtxt(res["mask"], ndmin=2)
    assert mask.shape == (res["frames"], 48)
    assert set(np.unique(mask)) <= {0.0, 1.0}


def test_featurize_missing_diagnostics(tmp_path, capsys):
    write_wav(tmp_path / "a.wav", MultichannelBuffer(np.zeros((1, 16000)), 16000))
    line = error(capsys, "featurize", tmp_path / "a.wav", "--out", tmp_path)
    assert line["error"] == "missing_diagnostics"


def test_eval_identical_files(tmp_path, capsys):
    x = np.random.default_rng(0).standard_normal((1, 48000)) * 0.1
    write_wav(tmp_path / "a.wav", MultichannelBuffer(x, 48000))
    res = ok(capsys, "eval", "--estimates", tmp_path / "a.wav", "--references", tmp_path / "a.wav",
             "--out", tmp_path / "r.csv")
    assert res["mean_snr_db"] == 99.0
    assert res["mean_lsd_db"] == 0.0
    assert (tmp_path / "r.csv").read_text().startswith("source_id,")


def test_eval_length_mismatch(tmp_path, capsys):
    write_wav(tmp_path / "a.wav", MultichannelBuffer(np.ones((1, 1000)) * 0.1, 48000))
    write_wav(tmp_path / "b.wav", MultichannelBuffer(np.ones((1, 999)) * 0.1, 48000))
    line = error(capsys, "eval", "--estimates", tmp_path / "a.wav", "--references", tmp_path / "b.wav")
    assert line["error"] == "length_mismatch"


def test_usage_error_exits_two(capsys):
    line = error(capsys, "dance", code=2)
    assert line["error"] == "usage"
    error(capsys, "--seed", "x", "eval", code=2)


def test_unreadable_wav(tmp_path, capsys):
    (tmp_path / "bad.wav").write_bytes(b"RIFF")
    assert error(capsys, "localize", tmp_path / "bad.wav", "--out", tmp_path)["error"] == "io"


def test_global_flags_after_subcommand(tmp_path, capsys):
    res = ok(capsys, "simulate", "--fixture", "single-static", "--out", tmp_path, "--seed", 9, "-v")
    assert res["seed"] == 9
