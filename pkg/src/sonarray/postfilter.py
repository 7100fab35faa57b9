"""Multi-source log-spectral MMSE post-filter.

The noise seen by each separated output is modelled as a stationary floor
(MCRA on that output), leakage from the other outputs scaled by ``eta``,
and an exponentially decaying reverberant tail fed by previous outputs.
The log-amplitude MMSE gain is then blended with a floor ``G_min`` using
a per-bin speech presence probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0e, i1e

from .localization.noise import MCRA, POWER_FLOOR

EULER_GAMMA = 0.57721566490153286061
UPSILON_MIN = 1e-6
XI_MIN = 1e-4


def exp1(x) -> np.ndarray:
    """Exponential integral ``E1(x)`` for ``x > 0``.

    Power series below 1, Lentz continued fraction above.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("E1 is only defined here for positive arguments")
    out = np.empty_like(x)
    small = x < 1.0
    if np.any(small):
        xs = x[small]
        term = np.ones_like(xs)
        total = np.zeros_like(xs)
        for k in range(1, 30):
            term = term * (-xs) / k
            total += term / k
        out[small] = -EULER_GAMMA - np.log(xs) - total
    if np.any(~small):
        xl = x[~small]
        b = xl + 1.0
        c = np.full_like(xl, 1e300)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, 200):
            a = -float(i * i)
            b = b + 2.0
            d = 1.0 / (a * d + b)
            c = b + a / c
            delta = c * d
            h *= delta
            if np.all(np.abs(delta - 1.0) < 1e-16):
                break
        out[~small] = h * np.exp(-xl)
    return out


def gain_log_mmse(xi, upsilon) -> np.ndarray:
    """Unclamped log-amplitude gain ``xi/(1+xi) exp(E1(upsilon)/2)``."""
    xi = np.asarray(xi, dtype=float)
    ups = np.maximum(np.asarray(upsilon, dtype=float), UPSILON_MIN)
    return xi / (1.0 + xi) * np.exp(0.5 * exp1(ups))


def gain_stsa(xi, upsilon, gamma) -> np.ndarray:
    """Amplitude-domain MMSE gain from the same ``xi``, ``gamma`` inputs."""
    ups = np.maximum(np.asarray(upsilon, dtype=float), UPSILON_MIN)
    gamma = np.maximum(np.asarray(gamma, dtype=float), UPSILON_MIN)
    h = 0.5 * ups
    return (np.sqrt(np.pi) / 2) * np.sqrt(ups) / gamma * ((1 + ups) * i0e(h) + ups * i1e(h))


def presence_probability(q, xi, upsilon) -> np.ndarray:
    """``p = 1 / (1 + q/(1-q) (1+xi) exp(-upsilon))``."""
    q = np.asarray(q, dtype=float)
    ratio = q / (1.0 - q)
    return 1.0 / (1.0 + ratio * (1.0 + np.asarray(xi)) * np.exp(-np.asarray(upsilon)))


def soft_presence(zeta, theta) -> np.ndarray:
    """``P = 1 / (1 + (theta/zeta)^2)``, zero where ``zeta = 0``."""
    zeta = np.asarray(zeta, dtype=float)
    out = np.zeros_like(zeta)
    nz = zeta > 0
    out[nz] = 1.0 / (1.0 + (theta / zeta[nz]) ** 2)
    return out


def combined_gain(g_h1, p, g_min: float = 0.1) -> np.ndarray:
    """``G = G_H1^p G_min^(1-p)`` with ``G_H1`` held in ``[G_min, 1]``."""
    g = np.clip(np.asarray(g_h1, dtype=float), g_min, 1.0)
    p = np.asarray(p, dtype=float)
    return g**p * g_min ** (1.0 - p)


def init_noise(mic_floors) -> np.ndarray:
    """Initial stationary noise of one output, ``sum(sigma_n^2) / N^2``."""
    f = np.atleast_2d(np.asarray(mic_floors, dtype=float))
    return f.sum(axis=0) / f.shape[0] ** 2


def hann_kernel(bandwidth_hz: float, bin_hz: float) -> np.ndarray:
    """Normalised Hann taps spanning ``bandwidth_hz``, at least 3 taps."""
    half = max(1, int(round(bandwidth_hz / (2.0 * bin_hz))))
    h = np.hanning(2 * half + 3)[1:-1]
    return h / h.sum()


def smooth_bins(x, kernel) -> np.ndarray:
    return np.convolve(x, kernel, mode="same")


@dataclass
class PostfilterConfig:
    eta: float = 0.1  # leakage factor, power ratio
    alpha_s: float = 0.2
    alpha_pmin: float = 0.07
    g_min: float = 0.1  # -20 dB amplitude
    theta: float = 10 ** (-0.5)  # -5 dB
    alpha_zeta: float = 0.3
    local_hz: float = 140.0
    global_hz: float = 1400.0
    q_max: float = 0.9
    reverb: bool = True
    gamma: float = 0.65
    delta: float = 3.3
    estimator: str = "log"  # "log" or "stsa"
    mcra_window: int = 140

    def __post_init__(self):
        if self.estimator not in ("log", "stsa"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")

    @classmethod
    def single_source(cls, **kw) -> "PostfilterConfig":
        """Baseline without the leakage and reverberation terms."""
        kw.setdefault("eta", 0.0)
        kw.setdefault("reverb", False)
        return cls(**kw)


@dataclass
class PostfilterState:
    """Per-output recursions."""

    n_bins: int
    init_floor: np.ndarray
    mcra_window: int = 140
    stat: MCRA = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_bins
        self.stat = MCRA(n, window=self.mcra_window)
        self.Z = np.zeros(n)
        self.rev = np.zeros(n)
        self.xi = np.zeros(n)
        self.g_h1 = np.ones(n)  # unclamped, previous frame
        self.gamma_prev = np.zeros(n)
        self.out_power = np.zeros(n)  # |S_hat(l-1)|^2
        self.zeta = {"local": np.zeros(n), "global": np.zeros(n), "frame": 0.0}
        self.frames = 0

    @property
    def lambda_stat(self) -> np.ndarray:
        return self.stat.noise if self.stat.mature else self.init_floor


def estimate_noise(states, Y, config: PostfilterConfig):
    """Advance Z, the stationary floor and the reverberant tail of every output.

    Returns ``(lambda_total, lambda_stat, lambda_leak, lambda_rev)`` each
    ``(sources, bins)``.  Leakage reads the updated Z of the other outputs.
    """
    Y = np.atleast_2d(Y)
    power = np.abs(Y) ** 2
    for s, pw in zip(states, power):
        s.Z = config.alpha_s * s.Z + (1 - config.alpha_s) * pw
        s.stat.update(pw)
        if config.reverb:
            s.rev = config.gamma * s.rev + (1 - config.gamma) / config.delta * s.out_power
    Z = np.array([s.Z for s in states])
    stat = np.array([s.lambda_stat for s in states])
    leak = config.eta * (Z.sum(axis=0)[None] - Z)
    rev = np.array([s.rev for s in states])
    if config.reverb:
        rev_total = np.broadcast_to(rev.sum(axis=0), stat.shape)
    else:
        rev_total = np.zeros_like(stat)
    return stat + leak + rev_total, stat, leak, rev


class MultiSourcePostfilter:
    """Post-filter over a changing set of outputs keyed by id."""

    def __init__(self, n_bins: int, fs: float, frame_length: int, config: PostfilterConfig | None = None):
        self.config = config or PostfilterConfig()
        self.n_bins = n_bins
        bin_hz = fs / frame_length
        self.kernels = {
            "local": hann_kernel(self.config.local_hz, bin_hz),
            "global": hann_kernel(self.config.global_hz, bin_hz),
        }
        frame = np.hanning(n_bins + 2)[1:-1]
        self.frame_weights = frame / frame.sum()
        self.states: dict = {}

    def _sync(self, ids, init_floor):
        for sid in [s for s in self.states if s not in ids]:
            del self.states[sid]
        for sid in ids:
            if sid not in self.states:
                floor = np.zeros(self.n_bins) if init_floor is None else np.asarray(init_floor, float)
                self.states[sid] = PostfilterState(self.n_bins, floor, self.config.mcra_window)

    def process(self, Y, ids, init_floor=None, diagnostics: bool = False):
        """Filter one frame of separated spectra ``Y`` ``(sources, bins)``.

        ``init_floor`` seeds the stationary noise of newly added outputs.
        Returns the enhanced spectra, plus a dict of per-bin diagnostics
        when ``diagnostics`` is set.
        """
        cfg = self.config
        Y = np.atleast_2d(np.asarray(Y))
        ids = list(ids)
        if len(ids) != Y.shape[0]:
            raise ValueError("one id per separated output is required")
        self._sync(ids, init_floor)
        states = [self.states[i] for i in ids]
        if not states:
            return (Y.copy(), {}) if diagnostics else Y.copy()

        lam, stat, leak, rev = estimate_noise(states, Y, cfg)
        lam = np.maximum(lam, POWER_FLOOR)
        power = np.abs(Y) ** 2
        gamma = power / lam
        S = np.empty_like(Y)
        diag = {k: np.zeros_like(stat) for k in ("xi", "p", "G")}
        for m, s in enumerate(states):
            a_p = np.minimum((s.xi / (1 + s.xi)) ** 2 + cfg.alpha_pmin, 1.0)
            if s.frames == 0:
                xi = np.maximum(gamma[m] - 1, 0.0)
            else:
                xi = (1 - a_p) * s.g_h1**2 * s.gamma_prev + a_p * np.maximum(gamma[m] - 1, 0.0)
            xi = np.maximum(xi, XI_MIN)
            ups = np.maximum(gamma[m] * xi / (1 + xi), UPSILON_MIN)
            if cfg.estimator == "log":
                g_h1 = gain_log_mmse(xi, ups)
            else:
                g_h1 = gain_stsa(xi, ups, gamma[m])

            az = cfg.alpha_zeta
            s.zeta["local"] = (1 - az) * s.zeta["local"] + az * smooth_bins(xi, self.kernels["local"])
            s.zeta["global"] = (1 - az) * s.zeta["global"] + az * smooth_bins(xi, self.kernels["global"])
            s.zeta["frame"] = (1 - az) * s.zeta["frame"] + az * float(self.frame_weights @ xi)
            P = (
                soft_presence(s.zeta["local"], cfg.theta)
                * soft_presence(s.zeta["global"], cfg.theta)
                * soft_presence(s.zeta["frame"], cfg.theta)
            )
            q = np.minimum(1.0 - P, cfg.q_max)
            p = presence_probability(q, xi, ups)
            G = combined_gain(g_h1, p, cfg.g_min)
            S[m] = G * Y[m]

            s.xi = xi
            s.g_h1 = g_h1
            s.gamma_prev = gamma[m]
            s.out_power = np.abs(S[m]) ** 2
            s.frames += 1
            diag["xi"][m], diag["p"][m], diag["G"][m] = xi, p, G
        if diagnostics:
            diag.update(lambda_stat=stat, lambda_leak=leak, lambda_rev=rev, s_in=power, s_out=np.abs(S) ** 2)
            return S, diag
        return S
