import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.fft import dct

import oracles
from sonarray.features import (
    DiagonalGmm,
    EmptyMaskWarning,
    binary_mask,
    compute_mask,
    continuous_mask,
    delta_mask,
    deltas,
    log_mel_energies,
    mel_features,
    mel_filterbank,
    mft_gmm_score,
    mft_score_sequence,
    rebin_to_features,
    smooth_log_mel,
    to_feature_rate,
)

FS = 16000


def test_feature_shapes():
    x = np.random.default_rng(0).standard_normal(FS)
    f = mel_features(x)
    assert f.static.shape == (1 + (FS - 400) // 160, 24)
    assert f.matrix().shape == (f.n_frames, 48)
    assert np.all(np.isfinite(f.matrix()))


def test_short_audio_rejected():
    with pytest.raises(ValueError, match="shorter than one frame"):
        mel_features(np.zeros(399))


def test_wrong_rate_rejected():
    with pytest.raises(ValueError):
        log_mel_energies(np.zeros(800), fs=8000)


def test_cms_zero_mean_cepstra():
    x = np.random.default_rng(1).standard_normal(2 * FS)
    c = dct(mel_features(x).static, type=2, norm="ortho", axis=-1)
    np.testing.assert_allclose(c[:, 1:13].mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(c[:, [0] + list(range(13, 24))], 0.0, atol=1e-10)


def test_constant_signal_has_zero_deltas():
    f = mel_features(np.full(FS, 0.3))
    np.testing.assert_allclose(f.delta, 0.0, atol=1e-9)


def test_delta_regression_on_ramp():
    feats = np.arange(20, dtype=float)[:, None] * np.ones((1, 3))
    d = deltas(feats)
    np.testing.assert_allclose(d[2:-2], 1.0)


def test_tone_lands_in_covering_band():
    f0 = 1000.0
    t = np.arange(FS) / FS
    logmel = log_mel_energies(np.sin(2 * np.pi * f0 * t))
    # Oracle band: the filter whose HTK-mel centre is nearest the tone.
    m = np.linspace(0, oracles.htk_mel(8000.0), 26)
    centres = 700 * (10 ** (m[1:-1] / 2595) - 1)
    expect = int(np.argmin(np.abs(centres - f0)))
    assert np.all(np.argmax(logmel, axis=1) == expect)


def test_filterbank_peaks_at_centres():
    m = np.linspace(0, oracles.htk_mel(8000.0), 26)
    centres = 700 * (10 ** (m[1:-1] / 2595) - 1)
    fb = mel_filterbank(centres)
    np.testing.assert_allclose(np.diag(fb), 1.0, atol=1e-12)


@given(arrays(float, (6, 24), elements=st.floats(-20, 20)), st.booleans())
def test_smoothing_idempotent(logmel, cms):
    once = smooth_log_mel(logmel, cms)
    np.testing.assert_allclose(smooth_log_mel(once, cms), once, atol=1e-9)


def test_resample_to_feature_rate():
    x = np.random.default_rng(0).standard_normal(48000)
    assert len(to_feature_rate(x, 48000)) == 16000
    with pytest.raises(ValueError):
        to_feature_rate(x, 44100)


# --- masks ---------------------------------------------------------------


def test_mask_threshold():
    np.testing.assert_array_equal(binary_mask([0.24, 0.25, 0.26]), [0, 0, 1])


def test_silence_mask_is_one():
    m = continuous_mask(np.full(4, 2.0), np.zeros(4), np.full(4, 2.0))
    np.testing.assert_allclose(m, 1.0)
    assert continuous_mask(0.0, 0.0, 0.0) == 1.0


def test_interference_band_masked():
    m = continuous_mask(1.0, 0.01, 0.0)
    assert m == pytest.approx(0.01)
    assert binary_mask(m) == 0


@given(st.floats(1e-3, 1e3), st.floats(0, 1e3), st.floats(0, 1e3), st.floats(0, 1e3))
def test_mask_monotone_in_output(s_in, s_out, extra, noise):
    a = binary_mask(continuous_mask(s_in, s_out, noise))
    b = binary_mask(continuous_mask(s_in, s_out + extra, noise))
    assert b >= a


def test_delta_mask_examples():
    col = lambda v: np.array(v, dtype=np.int8)[:, None]
    assert delta_mask(col([1, 1, 1, 1, 1]))[2, 0] == 1
    assert delta_mask(col([1, 1, 0, 1, 1]))[2, 0] == 0
    assert delta_mask(col([1, 0, 1, 0, 1]))[2, 0] == 0
    d = delta_mask(np.ones((9, 2), np.int8))
    np.testing.assert_array_equal(d[:, 0], [0, 0, 1, 1, 1, 1, 1, 0, 0])
    assert not delta_mask(np.ones((4, 2), np.int8)).any()


@given(arrays(np.int8, (12, 3), elements=st.integers(0, 1)))
def test_delta_mask_is_window_product(M):
    d = delta_mask(M)
    for ell in range(2, 10):
        np.testing.assert_array_equal(d[ell], np.prod(M[ell - 2 : ell + 3], axis=0))


def test_compute_mask_bundle():
    s_in = np.full((6, 24), 1.0)
    fm = compute_mask(s_in, np.full((6, 24), 0.5), np.zeros((6, 24)))
    assert fm.matrix().shape == (6, 48)
    assert fm.binary.all()
    np.testing.assert_array_equal(fm.delta[[0, 1, 4, 5]], 0)


def test_rebin_constant_power():
    fs, L, n = 48000, 1024, 48000
    frames = np.arange(1 + (n - L) // (L // 2))
    power = np.ones((len(frames), L // 2 + 1))
    out = rebin_to_features(power, frames, fs, L, n)
    fb = mel_filterbank(np.fft.rfftfreq(L, 1 / fs))
    interior = out[5:-5]
    np.testing.assert_allclose(interior, np.tile(fb.sum(axis=1), (len(interior), 1)), rtol=1e-12)
    assert not rebin_to_features(np.zeros((0, 0)), np.zeros(0, int), fs, L, n).any()


# --- marginalised GMM ---------------------------------------------------------


def random_gmm(rng, J, D):
    w = rng.uniform(0.1, 1, J)
    return DiagonalGmm(w / w.sum(), rng.standard_normal((J, D)), rng.uniform(0.2, 3, (J, D)))


@settings(max_examples=60)
@given(st.integers(1, 4), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_marginalisation_matches_dropped_gmm(J, D, seed):
    rng = np.random.default_rng(seed)
    g = random_gmm(rng, J, D)
    x = rng.standard_normal(D)
    keep = rng.random(D) < 0.6
    if not keep.any():
        keep[rng.integers(D)] = True
    ref = oracles.gmm_logpdf_dropped(g.weights, g.means, g.variances, x, keep)
    assert mft_gmm_score(g, x, keep) == pytest.approx(ref, abs=1e-12, rel=1e-12)
    assert mft_gmm_score(g, x, keep) == pytest.approx(mft_gmm_score(g.drop(keep), x[keep]), abs=1e-12)


def test_full_mask_is_plain_likelihood():
    rng = np.random.default_rng(0)
    g = random_gmm(rng, 3, 5)
    x = rng.standard_normal(5)
    ref = oracles.gmm_logpdf_dropped(g.weights, g.means, g.variances, x, np.ones(5, bool))
    assert mft_gmm_score(g, x) == pytest.approx(ref, abs=1e-12)


def test_single_dimension_at_mean():
    g = DiagonalGmm([1.0], [[0.5, 3.0]], [[2.0, 1.0]])
    assert mft_gmm_score(g, np.array([0.5, -9.0]), [1, 0]) == pytest.approx(-0.5 * np.log(2 * np.pi * 2.0))


def test_empty_mask_warns():
    g = DiagonalGmm([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
    with pytest.warns(EmptyMaskWarning):
        assert mft_gmm_score(g, np.zeros(2), [0, 0]) == 0.0


def test_score_sequence():
    rng = np.random.default_rng(2)
    g = random_gmm(rng, 2, 4)
    X = rng.standard_normal((5, 4))
    M = np.ones((5, 4), bool)
    np.testing.assert_allclose(mft_score_sequence(g, X, M), [mft_gmm_score(g, x) for x in X])


def test_gmm_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        DiagonalGmm([0.5, 0.6], np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        DiagonalGmm([1.0], np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        DiagonalGmm([1.0], np.zeros((1, 2)), np.ones((1, 3)))
    g = random_gmm(np.random.default_rng(4), 2, 3)
    g.save(tmp_path / "g.json")
    h = DiagonalGmm.load(tmp_path / "g.json")
    np.testing.assert_array_equal(h.means, g.means)
    np.testing.assert_array_equal(h.variances, g.variances)
    with pytest.raises(ValueError):
        mft_gmm_score(g, np.zeros(4))
