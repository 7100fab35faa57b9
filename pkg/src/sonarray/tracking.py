"""Particle-filter tracking of several sources on the unit sphere.

Each tracked source carries its own particle cloud.  Every step the
potential sources from the localiser are softly assigned to tracks, false
detections or new sources; the assignment probabilities then drive the
existence, activity and particle weight updates.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .geometry import unit

logger = logging.getLogger(__name__)

# (alpha, beta) per motion regime: stationary, constant velocity, accelerated
REGIMES = np.array([[2.0, 0.04], [0.05, 0.2], [0.5, 0.2]])
REGIME_PROBS = np.array([0.4, 0.4, 0.2])
UNIFORM_DENSITY = 1.0 / (4.0 * np.pi)
FALSE, NEW = -2, -1


@dataclass
class TrackerConfig:
    n_particles: int = 1000
    sigma: float = 0.05
    dt: float = 0.04
    p_new: float = 0.005
    p_false: float = 0.05
    p_unobserved: float = 0.2  # P_o
    birth_threshold: float = 0.3
    confirm_threshold: float = 0.98
    t_obs: float = 0.5
    death_time: float = 2.0
    delay: float = 0.5
    resample_fraction: float = 0.7
    max_tracks: int = 8
    p_exist_init: float = 0.5
    p_active_init: float = 0.5
    stay_active: float = 0.95
    become_active: float = 0.05


@dataclass
class SourceTrack:
    track_id: int
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    regimes: np.ndarray
    history_len: int
    p_exist: float = 0.5
    p_active: float = 0.5
    confirmed: bool = False
    born: int = 0
    last_observed: int = 0
    unobserved: int = 0
    degenerate: bool = False
    history: np.ndarray = field(init=False, repr=False)
    _head: int = field(init=False, repr=False, default=0)
    _filled: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        self.history = np.empty((self.history_len,) + self.positions.shape)
        self.push_history()

    @property
    def n_particles(self) -> int:
        return len(self.weights)

    def push_history(self) -> None:
        self._head = (self._head + 1) % self.history_len
        self.history[self._head] = self.positions
        self._filled = min(self._filled + 1, self.history_len)

    def past_positions(self, steps: int) -> np.ndarray:
        """Particle positions ``steps`` updates ago (clamped to what is stored)."""
        steps = min(max(steps, 0), self._filled - 1)
        return self.history[(self._head - steps) % self.history_len]


@dataclass
class AssignmentDistribution:
    p_track: np.ndarray  # (Q, M): P_{q,j}
    p_false: np.ndarray  # (Q,): P_q(H0)
    p_new: np.ndarray  # (Q,): P_q(H2)

    @property
    def observed(self) -> np.ndarray:
        """P_j = sum over q of P_{q,j}."""
        return self.p_track.sum(axis=0)


@dataclass
class TrackEstimate:
    track_id: int
    direction: np.ndarray
    delayed_direction: np.ndarray
    p_exist: float
    p_active: float
    confirmed: bool


def new_track(track_id: int, y, config: TrackerConfig, rng: np.random.Generator, frame: int = 0) -> SourceTrack:
    """Particles drawn around ``y`` with the observation spread, velocities zero."""
    n = config.n_particles
    pos = unit(np.asarray(y, dtype=float)[None, :] + config.sigma * rng.standard_normal((n, 3)))
    regimes = rng.choice(len(REGIME_PROBS), size=n, p=REGIME_PROBS)
    hist = max(1, int(round(config.delay / config.dt))) + 1
    return SourceTrack(
        track_id,
        pos,
        np.zeros((n, 3)),
        np.full(n, 1.0 / n),
        regimes,
        hist,
        p_exist=config.p_exist_init,
        p_active=config.p_active_init,
        born=frame,
        last_observed=frame,
    )


def predict(track: SourceTrack, dt: float, rng: np.random.Generator, regimes=REGIMES) -> None:
    """Damped random excitation of the velocity, then a position step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    alpha = regimes[track.regimes, 0]
    beta = regimes[track.regimes, 1]
    a = np.exp(-alpha * dt)
    b = beta * np.sqrt(1.0 - a * a)
    v = a[:, None] * track.velocities + b[:, None] * rng.standard_normal(track.velocities.shape)
    x = unit(track.positions + dt * v)
    v -= np.sum(v * x, axis=1, keepdims=True) * x
    track.positions = x
    track.velocities = v


def gaussian_norm(sigma: float) -> float:
    """Normalisation of the isotropic Gaussian on the (locally planar) sphere."""
    return 1.0 / (2.0 * np.pi * sigma * sigma)


def observation_likelihood(x, y, sigma: float = 0.05) -> np.ndarray:
    """``N(y; x, sigma^2)`` in Euclidean coordinates."""
    d2 = np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2, axis=-1)
    return gaussian_norm(sigma) * np.exp(-0.5 * d2 / (sigma * sigma))


def particle_likelihoods(track: SourceTrack, observations: np.ndarray, sigma: float) -> np.ndarray:
    """``p(O_q | x_i)`` for every observation and particle, shape ``(Q, Np)``."""
    return _kernels.observation_likelihoods(
        np.ascontiguousarray(track.positions),
        np.ascontiguousarray(observations, dtype=float),
        sigma,
        gaussian_norm(sigma),
    )


@lru_cache(maxsize=64)
def enumerate_assignments(Q: int, M: int) -> np.ndarray:
    """All maps q -> {-2, -1, 0..M-1} injective on tracks, shape ``(F, Q)``."""
    rows = [
        f
        for f in itertools.product(range(-2, M), repeat=Q)
        if len({j for j in f if j >= 0}) == sum(j >= 0 for j in f)
    ]
    out = np.array(rows, dtype=np.int64).reshape(-1, Q)
    out.setflags(write=False)
    return out


def assignment_posteriors(
    track_likelihood: np.ndarray,
    p_q: np.ndarray,
    p_observable: np.ndarray,
    p_new: float = 0.005,
    p_false: float = 0.05,
) -> AssignmentDistribution:
    """Posterior of every observation-to-track assignment, marginalised.

    Args:
        track_likelihood: ``(Q, M)`` ``p(O_q | j)`` (particle mixture).
        p_q: ``(Q,)`` detection confidences.
        p_observable: ``(M,)`` prior that each track exists and is active.
    """
    track_likelihood = np.atleast_2d(np.asarray(track_likelihood, dtype=float))
    p_q = np.asarray(p_q, dtype=float)
    Q = len(p_q)
    M = len(np.asarray(p_observable))
    track_likelihood = track_likelihood.reshape(Q, M)
    if M > 8 or Q > 4:
        raise ValueError("assignment enumeration is limited to Q <= 4 and M <= 8")
    # columns: false alarm, new source, tracks 0..M-1
    F = np.empty((Q, M + 2))
    F[:, 0] = (1.0 - p_q) * p_false * UNIFORM_DENSITY
    F[:, 1] = p_q * p_new * UNIFORM_DENSITY
    F[:, 2:] = p_q[:, None] * np.asarray(p_observable, dtype=float)[None, :] * track_likelihood
    # rescale rows: every assignment takes one factor per row
    scale = F.max(axis=1, keepdims=True)
    F = F / np.where(scale > 0, scale, 1.0)
    maps = enumerate_assignments(Q, M)
    prob = F[np.arange(Q)[None, :], maps + 2].prod(axis=1)
    total = prob.sum()
    if total <= 0:
        # every prior vanished; call all observations false alarms
        prob = np.all(maps == FALSE, axis=1).astype(float)
        total = 1.0
    prob /= total
    onehot = np.zeros((len(maps), Q, M + 2))
    onehot[np.arange(len(maps))[:, None], np.arange(Q)[None, :], maps + 2] = 1.0
    marg = np.einsum("f,fqc->qc", prob, onehot)
    return AssignmentDistribution(marg[:, 2:], marg[:, 0], marg[:, 1])


def update_existence(p_exist: float, p_observed: float, p_unobserved: float = 0.2, confirmed: bool = False) -> float:
    """Recursive existence probability given the probability of being observed."""
    if confirmed:
        return 1.0
    prior = p_unobserved * p_exist / (1.0 - (1.0 - p_unobserved) * p_exist)
    return float(min(1.0, p_observed + (1.0 - p_observed) * prior))


def activity_prior(p_active: float, stay: float = 0.95, wake: float = 0.05) -> float:
    """Markov prediction of the activity probability."""
    return stay * p_active + wake * (1.0 - p_active)


def instantaneous_activity(p_observed: float) -> float:
    """Evidence of activity from the current frame alone.

    The probability of being observed stands in for a dedicated activity
    detector.
    """
    return float(p_observed)


def update_activity(prior: float, evidence: float) -> float:
    """Fuse the temporal prior with the instantaneous evidence (equal base rates)."""
    num = prior * evidence
    den = num + (1.0 - prior) * (1.0 - evidence)
    if den <= 0:
        return float(prior)
    return float(num / den)


def update_particle_weights(track: SourceTrack, lik: np.ndarray, p_qj: np.ndarray) -> bool:
    """Reweight particles; returns ``False`` when the update is degenerate.

    Args:
        lik: ``(Q, Np)`` observation likelihoods for this track.
        p_qj: ``(Q,)`` assignment probabilities of this track.
    """
    p_j = float(np.sum(p_qj))
    n = track.n_particles
    if p_j > 0 and lik.size:
        mix = p_qj @ lik
        s = mix.sum()
        observed = mix / s if s > 0 else np.full(n, 1.0 / n)
    else:
        observed = np.full(n, 1.0 / n)
    inst = (1.0 - p_j) / n + p_j * observed
    w = inst * track.weights
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        track.degenerate = True
        return False
    track.weights = w / total
    track.degenerate = False
    return True


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / np.sum(w * w)


def systematic_indices(weights, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    n = len(w)
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right").clip(0, n - 1)


def resample(track: SourceTrack, rng: np.random.Generator, fraction: float = 0.7) -> bool:
    """Systematic resampling when ``N_eff < fraction * Np``; returns whether it ran."""
    n = track.n_particles
    if effective_sample_size(track.weights) >= fraction * n:
        return False
    idx = systematic_indices(track.weights, rng)
    track.positions = track.positions[idx]
    track.velocities = track.velocities[idx]
    track.history = track.history[:, idx]
    track.regimes = rng.choice(len(REGIME_PROBS), size=n, p=REGIME_PROBS)
    track.weights = np.full(n, 1.0 / n)
    return True


def estimate_position(track: SourceTrack, delay: float = 0.0, dt: float = 0.04) -> np.ndarray:
    """Weighted particle mean, optionally ``delay`` seconds in the past."""
    steps = int(round(delay / dt)) if delay > 0 else 0
    x = track.past_positions(steps) if steps else track.positions
    return unit(track.weights @ x)


class MultiSourceTracker:
    """Frame-by-frame tracker state machine."""

    def __init__(self, config: TrackerConfig | None = None, seed: int = 0):
        self.config = config or TrackerConfig()
        self.rng = np.random.default_rng(seed)
        self.tracks: list[SourceTrack] = []
        self.frame = 0
        self._next_id = 0
        self.last_assignment: AssignmentDistribution | None = None

    @property
    def death_frames(self) -> int:
        return int(round(self.config.death_time / self.config.dt))

    def step(self, observations, confidences) -> list[TrackEstimate]:
        """Advance one tracking step with ``Q`` observations (unit vectors)."""
        cfg = self.config
        obs = np.asarray(observations, dtype=float).reshape(-1, 3)
        p_q = np.clip(np.asarray(confidences, dtype=float).reshape(-1), 0.0, 1.0)
        tracks = self.tracks
        for t in tracks:
            predict(t, cfg.dt, self.rng)

        liks = [particle_likelihoods(t, obs, cfg.sigma) for t in tracks]
        track_lik = np.stack([l @ t.weights for l, t in zip(liks, tracks)], axis=1) if tracks else np.zeros((len(obs), 0))
        act_prior = np.array([activity_prior(t.p_active, cfg.stay_active, cfg.become_active) for t in tracks])
        p_obs = np.array([t.p_exist for t in tracks]) * act_prior if tracks else np.zeros(0)
        assign = assignment_posteriors(track_lik, p_q, p_obs, cfg.p_new, cfg.p_false)
        self.last_assignment = assign
        p_j = assign.observed

        for j, t in enumerate(tracks):
            t.p_exist = update_existence(t.p_exist, p_j[j], cfg.p_unobserved, t.confirmed)
            if t.p_exist >= cfg.confirm_threshold:
                t.confirmed = True
                t.p_exist = 1.0
            t.p_active = update_activity(act_prior[j], instantaneous_activity(p_j[j]))
            update_particle_weights(t, liks[j], assign.p_track[:, j])
            resample(t, self.rng, cfg.resample_fraction)
            t.push_history()
            if p_j[j] < cfg.t_obs:
                t.unobserved += 1
            else:
                t.unobserved = 0
                t.last_observed = self.frame

        self.tracks = [t for t in tracks if t.unobserved <= self.death_frames]
        for q in np.flatnonzero(assign.p_new > cfg.birth_threshold):
            if len(self.tracks) >= cfg.max_tracks:
                logger.debug("track limit reached; birth at step %d dropped", self.frame)
                break
            self.tracks.append(new_track(self._next_id, obs[q], cfg, self.rng, self.frame))
            self._next_id += 1
        self.frame += 1
        return self.estimates()

    def estimates(self) -> list[TrackEstimate]:
        cfg = self.config
        return [
            TrackEstimate(
                t.track_id,
                estimate_position(t),
                estimate_position(t, cfg.delay, cfg.dt),
                t.p_exist,
                t.p_active,
                t.confirmed,
            )
            for t in self.tracks
        ]
