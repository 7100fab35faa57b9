"""Streaming localiser: STFT frames in, potential sources out every block."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio import MultichannelBuffer, stft_analyze
from ..geometry import SPEED_OF_SOUND, centred
from .correlation import enhanced_cross_correlations
from .grid import SphericalGrid, load_or_build
from .noise import NoiseWeightState, mcra_update, update_weights
from .search import PotentialSource, energy_threshold, multi_source_search, refine_direction


@dataclass
class LocalizerConfig:
    frame_length: int = 1024
    block: int = 4  # frames averaged per localisation step
    levels: int = 4
    n_sources: int = 4
    energy_base: float = 150.0
    zero_halfwidth: int = 1
    region_search: bool = True
    refine: bool = True
    alpha_d: float = 0.1
    reverb: bool = True
    gamma: float = 0.65
    delta: float = 3.3
    mcra_window: int = 140
    speed_of_sound: float = SPEED_OF_SOUND


@dataclass
class Detection:
    frame_index: int  # last STFT frame of the block
    time: float
    sources: list


class Localizer:
    """Per-frame spectral weighting and per-block multi-source search."""

    def __init__(self, mic_positions, fs: int, config: LocalizerConfig | None = None,
                 grid: SphericalGrid | None = None, cache_path=None):
        self.config = config or LocalizerConfig()
        self.mics = centred(mic_positions)
        self.fs = fs
        c = self.config
        if grid is None or grid.tdoa_table is None:
            grid, _ = load_or_build(self.mics, fs, c.speed_of_sound, c.levels, cache_path)
        self.grid = grid
        n_bins = c.frame_length // 2 + 1
        self.weights_state = NoiseWeightState(
            len(self.mics), n_bins, c.alpha_d, c.gamma, c.delta, c.reverb, c.mcra_window
        )
        self.e_threshold = energy_threshold(len(self.mics) * (len(self.mics) - 1) // 2, c.energy_base)
        self._X = np.zeros((len(self.mics), c.block, n_bins), dtype=complex)
        self._Z = np.zeros((len(self.mics), c.block, n_bins))
        self._count = 0

    def process_frame(self, X) -> list[PotentialSource] | None:
        """Feed one frame ``(channels, bins)``; returns detections at block ends."""
        c = self.config
        mcra_update(self.weights_state, np.abs(X) ** 2)
        zeta = update_weights(self.weights_state, X)
        slot = self._count % c.block
        self._X[:, slot] = X
        self._Z[:, slot] = zeta
        self._count += 1
        if self._count % c.block:
            return None
        bank = enhanced_cross_correlations(self._X, self._Z, c.frame_length)
        found = multi_source_search(
            bank, self.grid, c.n_sources, self.e_threshold, c.zero_halfwidth, c.region_search
        )
        if c.refine:
            for s in found:
                s.direction = refine_direction(bank, s.direction, self.mics, self.fs, c.speed_of_sound)
        return found

    def run(self, buf: MultichannelBuffer) -> list[Detection]:
        frames = stft_analyze(buf, self.config.frame_length)
        out = []
        for ell in range(frames.n_frames):
            found = self.process_frame(frames.frames[:, ell])
            if found is not None:
                out.append(Detection(ell, frames.frame_time(ell), found))
        return out
