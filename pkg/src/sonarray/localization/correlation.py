"""Weighted (enhanced) cross-correlations between all microphone pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import mic_pairs

AMPLITUDE_FLOOR = 1e-10


@dataclass
class CrossCorrelationBank:
    """Circular cross-correlations ``R_ij(tau)`` for every pair ``i < j``.

    ``corr[p, tau]`` peaks at the lag by which microphone ``j`` lags
    microphone ``i``: ``R_ij(tau) = sum_k conj(Xi) Xj exp(+2j pi k tau / L)``
    summed over all ``L`` bins, i.e. without the ``1/L`` of an inverse DFT.
    Negative lags live at ``tau mod L``.
    """

    corr: np.ndarray
    cross_spectra: np.ndarray = field(repr=False)
    pairs: np.ndarray
    frame_length: int
    n_frames: int = 1

    @property
    def n_pairs(self) -> int:
        return self.corr.shape[0]

    def lookup(self, tau) -> np.ndarray:
        """``R_ij(tau_ij)`` for an integer lag per pair."""
        tau = np.asarray(tau, dtype=np.int64) % self.frame_length
        return self.corr[np.arange(self.n_pairs), tau]

    def upsampled(self, factor: int) -> np.ndarray:
        """Band-limited interpolation of ``corr`` on a ``1/factor`` sample grid."""
        L = self.frame_length
        cache = getattr(self, "_upsampled", None)
        if cache is not None and cache[0] == factor:
            return cache[1]
        spec = self.cross_spectra.copy()
        # split the Nyquist bin so the zero-padded spectrum stays symmetric
        spec[:, -1] *= 0.5
        up = np.fft.irfft(spec, n=L * factor, axis=-1) * (L * factor)
        self._upsampled = (factor, up)
        return up

    def interpolate(self, tau, factor: int = 8) -> np.ndarray:
        """``R_ij`` at fractional lags (one per pair, or shape ``(..., pairs)``)."""
        up = self.upsampled(factor)
        n = up.shape[1]
        pos = np.rint(np.asarray(tau, dtype=float) * factor).astype(np.int64) % n
        return up[np.arange(self.n_pairs), pos]


def whitened_spectra(X, weights=None) -> np.ndarray:
    """``zeta X / |X|`` with the magnitude floored to avoid division by zero."""
    X = np.asarray(X)
    mag = np.maximum(np.abs(X), AMPLITUDE_FLOOR)
    out = X / mag
    if weights is not None:
        out = out * weights
    return out


def enhanced_cross_correlations(
    spectra, weights=None, frame_length: int | None = None, whiten: bool = True
) -> CrossCorrelationBank:
    """Average the weighted cross-power spectra over frames and transform.

    Args:
        spectra: one-sided spectra, shape ``(channels, frames, bins)`` or
            ``(channels, bins)`` for a single frame.
        weights: ``zeta`` with the same shape as ``spectra`` (or ``None``
            for unit weights).
        frame_length: ``L``; defaults to ``2 * (bins - 1)``.
        whiten: divide by ``|Xi||Xj|``.  Disable to get the plain
            cross-correlation used by the delay-and-sum energy identity.
    """
    X = np.asarray(spectra)
    if X.ndim == 2:
        X = X[:, np.newaxis, :]
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 2:
            weights = weights[:, np.newaxis, :]
        if weights.shape != X.shape:
            raise ValueError(f"weights {weights.shape} do not match spectra {X.shape}")
    n_ch, n_frames, n_bins = X.shape
    if n_frames < 1:
        raise ValueError("need at least one frame")
    L = frame_length or 2 * (n_bins - 1)
    if n_bins != L // 2 + 1:
        raise ValueError(f"{n_bins} bins inconsistent with frame length {L}")

    if whiten:
        Y = whitened_spectra(X, weights)
    else:
        Y = X if weights is None else X * weights
    pairs = mic_pairs(n_ch)
    cross = np.mean(np.conj(Y[pairs[:, 0]]) * Y[pairs[:, 1]], axis=1)
    corr = np.fft.irfft(cross, n=L, axis=-1) * L
    return CrossCorrelationBank(
        corr=np.ascontiguousarray(corr),
        cross_spectra=cross,
        pairs=pairs,
        frame_length=L,
        n_frames=n_frames,
    )
