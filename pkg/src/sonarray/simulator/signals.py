"""Bundled test signals.  Each generator returns ``(signal, active)``.

``active`` is a boolean per-sample flag marking where the source emits
sound; it drives the ground-truth activity and silence segments.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sps


def _ramp(n: int, fs: float, ramp_s: float = 0.01) -> np.ndarray:
    r = max(1, min(int(ramp_s * fs), n // 2))
    env = np.ones(n)
    fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
    env[:r] = fade
    env[n - r :] = fade[::-1]
    return env


# (F1, F2, F3) in Hz for a few vowels.
_VOWELS = np.array([
    [730, 1090, 2440], [270, 2290, 3010], [530, 1840, 2480], [660, 1720, 2410],
    [300, 870, 2240], [570, 840, 2410], [440, 1020, 2240], [490, 1350, 1690],
])
_BANDWIDTHS = np.array([80.0, 100.0, 150.0])


def long_term_shape(f) -> np.ndarray:
    """Amplitude tilt shared by the speech surrogates (flat to 500 Hz, then falling)."""
    f = np.asarray(f, dtype=float)
    return 1.0 / (1.0 + (f / 500.0) ** 1.5) / (1.0 + (80.0 / np.maximum(f, 1.0)) ** 4)


def formant_response(f, formants, bandwidths=_BANDWIDTHS, gain: float = 4.0) -> np.ndarray:
    """Unit baseline plus Lorentzian peaks of height ``gain`` at each formant."""
    f = np.asarray(f, dtype=float)[..., None]
    half = np.asarray(bandwidths) / 2
    return 1.0 + gain * np.sum(half**2 / ((f - np.asarray(formants)) ** 2 + half**2), axis=-1)


def _runs(active) -> list[tuple[int, int]]:
    edges = np.diff(np.concatenate([[0], active.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def speech_shaped_noise(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with a long-term speech-like spectrum (flat to 500 Hz, then -9 dB/oct)."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    x = np.fft.irfft(spec * long_term_shape(f), n=n)
    return x / (np.std(x) + 1e-20)


def syllabic_envelope(
    n: int,
    fs: float,
    rng: np.random.Generator,
    syllable=(0.10, 0.30),
    gap=(0.04, 0.20),
    long_pause=(0.4, 1.0),
    long_pause_prob: float = 0.15,
    start_active: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    env = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    pos = 0 if start_active else int(rng.uniform(*gap) * fs)
    while pos < n:
        length = int(rng.uniform(*syllable) * fs)
        end = min(n, pos + length)
        if end > pos:
            env[pos:end] = _ramp(end - pos, fs) * rng.uniform(0.6, 1.0)
            active[pos:end] = True
        if rng.random() < long_pause_prob:
            pos = end + int(rng.uniform(*long_pause) * fs)
        else:
            pos = end + int(rng.uniform(*gap) * fs)
    return env, active


def speech_like(
    duration: float, fs: float, rng: np.random.Generator, formant_gain: float = 0.0, **envelope
) -> tuple[np.ndarray, np.ndarray]:
    """Speech-shaped noise gated by a syllable-rate envelope with pauses.

    With ``formant_gain > 0`` every syllable is coloured by a random vowel's
    formant peaks, so the power in a given band rises and falls from one
    syllable to the next while the fine structure stays noise-like.
    """
    n = int(round(duration * fs))
    env, active = syllabic_envelope(n, fs, rng, **envelope)
    if formant_gain <= 0:
        return speech_shaped_noise(n, fs, rng) * env, active
    x = np.zeros(n)
    for a, b in _runs(active):
        m = b - a
        f = np.fft.rfftfreq(m, 1.0 / fs)
        formants = _VOWELS[rng.integers(len(_VOWELS))] * rng.uniform(0.9, 1.1, size=3)
        shape = long_term_shape(f) * formant_response(f, formants, gain=formant_gain)
        seg = np.fft.irfft(np.fft.rfft(rng.standard_normal(m)) * shape, n=m)
        x[a:b] = seg / (np.std(seg) + 1e-20)
    return x * env, active


def voiced_speech(
    duration: float,
    fs: float,
    rng: np.random.Generator,
    voiced_prob: float = 0.8,
    f0_range=(90.0, 230.0),
    aspiration: float = 0.3,
    **envelope,
) -> tuple[np.ndarray, np.ndarray]:
    """Source-filter speech surrogate.

    Voiced syllables are harmonic series on a gliding pitch contour shaped
    by random vowel formants, plus some aspiration noise; the rest are
    high-passed noise bursts.
    """
    n = int(round(duration * fs))
    env, active = syllabic_envelope(n, fs, rng, **envelope)
    f0_base = rng.uniform(*f0_range)
    x = np.zeros(n)
    for a, b in _runs(active):
        m = b - a
        t = np.arange(m) / fs
        if rng.random() < voiced_prob:
            f_start, f_end = f0_base * rng.uniform(0.85, 1.15, size=2)
            f0 = f_start + (f_end - f_start) * t / max(t[-1], 1e-9)
            phase = 2 * np.pi * np.cumsum(f0) / fs
            formants = _VOWELS[rng.integers(len(_VOWELS))] * rng.uniform(0.9, 1.1, size=3)
            f_mean = 0.5 * (f_start + f_end)
            n_h = int(min(8000.0, 0.45 * fs) // f_mean)
            h = np.arange(1, n_h + 1)
            amp = formant_response(h * f_mean, formants) * long_term_shape(h * f_mean)
            seg = np.sin(np.outer(phase, h) + rng.uniform(0, 2 * np.pi, n_h)) @ amp
            seg = seg / (np.std(seg) + 1e-20) + aspiration * speech_shaped_noise(m, fs, rng)
        else:
            seg = sps.sosfilt(sps.butter(4, 2500.0, "highpass", fs=fs, output="sos"), rng.standard_normal(m))
        x[a:b] = seg / (np.std(seg) + 1e-20)
    return x * env, active


def white_noise(duration: float, fs: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(duration * fs))
    return rng.standard_normal(n), np.ones(n, dtype=bool)


def noise_bursts(
    duration: float, fs: float, rng: np.random.Generator, burst: float = 0.1, period: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    """White-noise bursts of ``burst`` seconds every ``period`` seconds."""
    n = int(round(duration * fs))
    x = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    b = int(burst * fs)
    for start in range(0, n, int(period * fs)):
        end = min(n, start + b)
        x[start:end] = rng.standard_normal(end - start) * _ramp(end - start, fs, 0.002)
        active[start:end] = True
    return x, active


def hand_claps(duration: float, fs: float, rng: np.random.Generator, period: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(duration * fs))
    x = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    tail = int(0.05 * fs)
    decay = np.exp(-np.arange(tail) / (0.008 * fs))
    b, a = sps.butter(2, [800, 4000], btype="bandpass", fs=fs)
    for start in range(0, n, int(period * fs)):
        end = min(n, start + tail)
        burst = sps.lfilter(b, a, rng.standard_normal(tail))[: end - start] * decay[: end - start]
        x[start:end] = burst
        active[start:end] = True
    return x, active


def chirp(duration: float, fs: float, rng=None, f0: float = 200.0, f1: float = 8000.0) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    return sps.chirp(t, f0, duration, f1, method="logarithmic"), np.ones(n, dtype=bool)


def tone_bursts(
    duration: float, fs: float, rng=None, freq: float = 1000.0, burst: float = 0.2, period: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    active = (t % period) < burst
    x = np.sin(2 * np.pi * freq * t) * active
    return x, active


GENERATORS = {
    "speech": speech_like,
    "voiced": voiced_speech,
    "white": white_noise,
    "noise_bursts": noise_bursts,
    "claps": hand_claps,
    "chirp": chirp,
    "tones": tone_bursts,
}


def pink_noise(shape, fs: float, rng: np.random.Generator, corner: float = 200.0) -> np.ndarray:
    """Unit-variance noise along the last axis, flat below ``corner`` Hz and 1/f above.

    The flat low end keeps the effective sample count high enough that
    independent channels show small sample correlations over one second.
    """
    n = shape[-1]
    spec = np.fft.rfft(rng.standard_normal(shape), axis=-1)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec *= 1.0 / np.sqrt(np.maximum(f, corner))
    x = np.fft.irfft(spec, n=n, axis=-1)
    return x / (np.std(x, axis=-1, keepdims=True) + 1e-20)
