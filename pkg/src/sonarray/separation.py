"""Geometric source separation (GSS) in the STFT domain.

Every frequency bin ``k`` has its own demixing matrix ``W(k)`` (sources x
microphones).  It is adapted by stochastic gradient on two costs: the
off-diagonal output cross-power ``J1 = ||yy^H - diag(yy^H)||^2`` and the
geometric constraint ``J2 = ||W A - I||^2`` that keeps unit gain towards
each tracked direction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import SPEED_OF_SOUND, angle_between, centred

logger = logging.getLogger(__name__)


def source_delays(directions, mic_positions, fs: float, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Far-field delay (samples) of every source at every mic, ``(mics, sources)``.

    Delays are relative to the array centroid.
    """
    mics = centred(mic_positions)
    u = np.atleast_2d(np.asarray(directions, dtype=float))
    return -(fs / c) * mics @ u.T


@dataclass
class MixingModel:
    A: np.ndarray  # (bins, mics, sources)
    delays: np.ndarray  # (mics, sources)
    frame_length: int


def steering_vectors(delays, frame_length: int) -> np.ndarray:
    """``exp(-2j pi k delta / L)`` for the one-sided bins, ``(bins, mics, sources)``."""
    k = np.arange(frame_length // 2 + 1)
    d = np.asarray(delays, dtype=float)
    return np.exp(-2j * np.pi * k[:, None, None] * d[None, :, :] / frame_length)


def build_mixing_matrix(
    directions, mic_positions, fs: float, frame_length: int = 1024, c: float = SPEED_OF_SOUND
) -> MixingModel:
    """Unit-modulus free-field mixing matrices with fractional delays."""
    delays = source_delays(directions, mic_positions, fs, c)
    return MixingModel(steering_vectors(delays, frame_length), delays, frame_length)


def init_demixing(A) -> np.ndarray:
    """Delay-and-sum rows: ``W[m] = conj(A[:, m]) / N``, shape ``(bins, sources, mics)``."""
    A = np.asarray(A)
    return np.conj(np.swapaxes(A, -1, -2)) / A.shape[-2]


def apply_demixing(W, x) -> np.ndarray:
    """``y(k) = W(k) x(k)``; ``x`` is ``(bins, mics)``, result ``(bins, sources)``."""
    return np.einsum("kmn,kn->km", W, x)


def cost_j1(W, x) -> np.ndarray:
    """Per-bin ``||E||^2`` with ``E = yy^H - diag(yy^H)``."""
    y = apply_demixing(W, x)
    R = y[:, :, None] * np.conj(y[:, None, :])
    idx = np.arange(R.shape[-1])
    R[:, idx, idx] = 0.0
    return np.sum(np.abs(R) ** 2, axis=(1, 2))


def cost_j2(W, A) -> np.ndarray:
    """Per-bin ``||W A - I||^2``."""
    C = W @ A
    C = C - np.eye(C.shape[-1])[None]
    return np.sum(np.abs(C) ** 2, axis=(1, 2))


def grad_j1(W, x) -> np.ndarray:
    """``4 E W x x^H`` (``dJ/dRe W + j dJ/dIm W``)."""
    y = apply_demixing(W, x)
    E = y[:, :, None] * np.conj(y[:, None, :])
    idx = np.arange(E.shape[-1])
    E[:, idx, idx] = 0.0
    Ey = np.einsum("kij,kj->ki", E, y)
    return 4.0 * Ey[:, :, None] * np.conj(x)[:, None, :]


def grad_j2(W, A) -> np.ndarray:
    """``2 (W A - I) A^H``."""
    C = W @ A - np.eye(A.shape[-1])[None]
    return 2.0 * C @ np.conj(np.swapaxes(A, -1, -2))


@dataclass
class DemixingState:
    W: np.ndarray  # (bins, sources, mics)
    mu: float = 0.01
    lam: float = 0.5

    @property
    def n_sources(self) -> int:
        return self.W.shape[1]


def gss_update(state: DemixingState, x, A, active=None) -> np.ndarray:
    """One regularised stochastic-gradient step for every bin.

    ``active`` (bool per source) restricts the step to some rows; other
    rows are left untouched.  Bins with ``x = 0`` skip the ``J1`` term.
    """
    W = state.W
    x = np.asarray(x)
    norm2 = np.sum(np.abs(x) ** 2, axis=-1)
    alpha = np.zeros_like(norm2)
    nz = norm2 > 0
    alpha[nz] = norm2[nz] ** -2
    g = alpha[:, None, None] * grad_j1(W, x) + grad_j2(W, A)
    new = (1.0 - state.lam * state.mu) * W - state.mu * g
    if active is not None:
        active = np.asarray(active, dtype=bool)
        new[:, ~active, :] = W[:, ~active, :]
    state.W = new
    return new


@dataclass
class SeparatorConfig:
    mu: float = 0.01
    lam: float = 0.5
    rebuild_angle: float = 1.0  # degrees of movement before A is recomputed
    min_activity: float = 0.1
    adapt: bool = True  # False freezes the delay-and-sum initialisation


@dataclass
class GSSSeparator:
    """Demixing state over a changing set of sources keyed by track id."""

    mic_positions: np.ndarray
    fs: float
    frame_length: int = 1024
    config: SeparatorConfig = field(default_factory=SeparatorConfig)
    c: float = SPEED_OF_SOUND

    def __post_init__(self):
        self.mics = centred(self.mic_positions)
        self.n_bins = self.frame_length // 2 + 1
        self.ids: list = []
        self.directions = np.zeros((0, 3))
        self.A = np.zeros((self.n_bins, len(self.mics), 0), dtype=complex)
        self.state = DemixingState(
            np.zeros((self.n_bins, 0, len(self.mics)), dtype=complex), self.config.mu, self.config.lam
        )

    def _column(self, u) -> np.ndarray:
        d = source_delays(u, self.mics, self.fs, self.c)
        return steering_vectors(d, self.frame_length)[:, :, 0]

    def add_source(self, sid, u) -> None:
        col = self._column(u)
        self.ids.append(sid)
        self.directions = np.vstack([self.directions, np.asarray(u, float)[None]])
        self.A = np.concatenate([self.A, col[:, :, None]], axis=2)
        row = np.conj(col) / len(self.mics)
        self.state.W = np.concatenate([self.state.W, row[:, None, :]], axis=1)

    def remove_source(self, sid) -> None:
        m = self.ids.index(sid)
        self.ids.pop(m)
        self.directions = np.delete(self.directions, m, axis=0)
        self.A = np.delete(self.A, m, axis=2)
        self.state.W = np.delete(self.state.W, m, axis=1)

    def set_sources(self, sources) -> None:
        """Synchronise with ``[(id, direction), ...]``."""
        wanted = {sid: u for sid, u in sources}
        for sid in [s for s in self.ids if s not in wanted]:
            self.remove_source(sid)
        for sid, u in sources:
            if sid not in self.ids:
                self.add_source(sid, u)
                continue
            m = self.ids.index(sid)
            if angle_between(self.directions[m], u) > self.config.rebuild_angle:
                self.directions[m] = u
                self.A[:, :, m] = self._column(u)

    def process(self, x, activity=None) -> np.ndarray:
        """Separate one frame ``x`` ``(mics, bins)``; returns ``(sources, bins)``.

        The output uses the current ``W``; adaptation happens afterwards.
        """
        xk = np.asarray(x).T
        y = apply_demixing(self.state.W, xk).T
        if self.config.adapt and self.ids:
            active = None
            if activity is not None:
                active = np.asarray(activity, dtype=float) >= self.config.min_activity
            gss_update(self.state, xk, self.A, active)
        return y
