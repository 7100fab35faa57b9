"""Per-microphone noise tracking and spectral weighting for localisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POWER_FLOOR = 1e-12


@dataclass
class MCRA:
    """Minima-controlled recursive averaging noise estimator.

    Tracks the minimum of the time-smoothed power over a sliding window of
    ``window`` frames and averages the input power into the noise estimate
    at a rate slowed down by the speech presence probability.  Bins whose
    smoothed power exceeds ``delta`` times the tracked minimum are frozen
    for the current frame, so short loud bursts do not leak into the floor.

    Args:
        n_bins: number of frequency bins, or a shape tuple to track
            several channels at once.
        window: minimum-search window in frames (about 1.5 s by default).
        alpha_s: time smoothing of the power used for minimum tracking.
        alpha_d: noise smoothing factor.
        alpha_p: smoothing of the speech presence probability.
        delta: ratio above which a bin is considered to contain speech.
    """

    n_bins: int
    window: int = 140
    alpha_s: float = 0.8
    alpha_d: float = 0.95
    alpha_p: float = 0.2
    delta: float = 5.0
    noise: np.ndarray = field(init=False, repr=False)
    frames_seen: int = field(init=False, default=0)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least one frame")
        self.shape = (self.n_bins,) if np.isscalar(self.n_bins) else tuple(self.n_bins)
        self.noise = np.zeros(self.shape)
        self._smoothed = np.zeros(self.shape)
        self._min = np.zeros(self.shape)
        self._tmp = np.zeros(self.shape)
        self._presence = np.zeros(self.shape)

    @property
    def mature(self) -> bool:
        return self.frames_seen >= self.window

    def update(self, power) -> np.ndarray:
        power = np.asarray(power, dtype=float)
        if power.shape != self.shape:
            raise ValueError(f"expected shape {self.shape}, got {power.shape}")
        if np.any(power < 0):
            raise ValueError("power spectrum must be nonnegative")
        if self.frames_seen == 0:
            self._smoothed = power.copy()
            self._min = power.copy()
            self._tmp = power.copy()
            self.noise = power.copy()
            self.frames_seen = 1
            return self.noise

        self._smoothed = self.alpha_s * self._smoothed + (1 - self.alpha_s) * power
        if self.frames_seen % self.window == 0:
            self._min = np.minimum(self._tmp, self._smoothed)
            self._tmp = self._smoothed.copy()
        else:
            self._min = np.minimum(self._min, self._smoothed)
            self._tmp = np.minimum(self._tmp, self._smoothed)

        speech = self._smoothed > self.delta * np.maximum(self._min, POWER_FLOOR)
        self._presence = self.alpha_p * self._presence + (1 - self.alpha_p) * speech
        rate = self.alpha_d + (1 - self.alpha_d) * self._presence
        rate = np.where(speech, 1.0, rate)
        self.noise = rate * self.noise + (1 - rate) * power
        self.frames_seen += 1
        return self.noise


def mcra_update(state: "NoiseWeightState | MCRA", spectrum) -> np.ndarray:
    """Advance the noise floor of ``state`` with one power spectrum.

    For a :class:`NoiseWeightState`, ``spectrum`` has shape
    ``(channels, bins)``.
    """
    if isinstance(state, MCRA):
        return state.update(spectrum)
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape != (state.n_channels, state.n_bins):
        raise ValueError(f"dimension mismatch: {spectrum.shape}")
    return state.tracker.update(spectrum)


def reverb_decay(t60: float, hop_seconds: float) -> float:
    """Per-frame decay of reverberant energy, ``10**(-6 hop / T60)``.

    ``hop_seconds`` is the frame period, so ``T60`` is in seconds.
    """
    if t60 <= 0:
        return 0.0
    return 10.0 ** (-6.0 * hop_seconds / t60)


@dataclass
class NoiseWeightState:
    """SNR and reverberation weights ``zeta`` for every microphone.

    ``zeta = xi / (xi + 1)`` with the a priori SNR ``xi`` from the
    decision-directed rule.  With ``reverb=True`` a decaying estimate of
    reverberant energy is added to the noise in the denominator.
    """

    n_channels: int
    n_bins: int
    alpha_d: float = 0.1
    gamma: float = 0.65
    delta: float = 3.3
    reverb: bool = False
    mcra_window: int = 140
    tracker: MCRA = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        self.tracker = MCRA((self.n_channels, self.n_bins), window=self.mcra_window)
        self.zeta = np.zeros((self.n_channels, self.n_bins))
        self.xi = np.zeros((self.n_channels, self.n_bins))
        self.reverb_power = np.zeros((self.n_channels, self.n_bins))
        self._prev_power = np.zeros((self.n_channels, self.n_bins))

    @property
    def sigma2(self) -> np.ndarray:
        return self.tracker.noise

    def weights(self, X) -> np.ndarray:
        """Update the weights with the spectra ``X`` (channels, bins) of one frame."""
        return update_weights(self, X)


def update_weights(state: NoiseWeightState, X) -> np.ndarray:
    """Decision-directed ``zeta`` for the current frame.

    The noise floor must already include this frame (call :func:`mcra_update`
    first).  The reverberation estimate is advanced with the previous
    frame's weighted spectrum before being used.
    """
    X = np.asarray(X)
    if X.shape != (state.n_channels, state.n_bins):
        raise ValueError(f"dimension mismatch: {X.shape}")
    power = np.abs(X) ** 2
    noise = np.maximum(state.sigma2, POWER_FLOOR)
    if state.reverb:
        state.reverb_power = state.gamma * state.reverb_power + (
            (1 - state.gamma) / state.delta
        ) * (state.zeta**2 * state._prev_power)
        noise = noise + state.reverb_power
    xi = (
        (1 - state.alpha_d) * state.zeta**2 * state._prev_power + state.alpha_d * power
    ) / noise
    state.xi = xi
    state.zeta = xi / (xi + 1.0)
    state._prev_power = power
    return state.zeta
