"""Steered-beamformer direction search over the spherical grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..geometry import SPEED_OF_SOUND, azimuth_elevation, centred, tangent_basis, unit
from .correlation import CrossCorrelationBank
from .grid import SphericalGrid, near_field_tdoa

REFERENCE_PAIRS = 28  # eight microphones
REFINE_DISTANCES = (0.5, 0.85, 1.45, 2.5, 5.0)


@dataclass
class PotentialSource:
    direction: np.ndarray
    energy: float
    confidence: float
    grid_index: int = -1


def source_confidence(q: int, nu: float) -> float:
    """Probability that the ``q``-th loudest peak is a real source.

    ``nu`` is the loudest energy over the threshold ``E_T``; only ``q = 0``
    depends on it.
    """
    if q == 0:
        nu = max(float(nu), 0.0)
        return nu * nu / 2.0 if nu <= 1.0 else 1.0 - 0.5 / (nu * nu)
    return {1: 0.3, 2: 0.16, 3: 0.03}.get(q, 0.0)


def energy_threshold(n_pairs: int, base: float = 150.0) -> float:
    """``E_T`` scaled with the number of microphone pairs."""
    return base * n_pairs / REFERENCE_PAIRS


def grid_energies(bank: CrossCorrelationBank, grid: SphericalGrid, region: bool = False) -> np.ndarray:
    """Steered energy of every grid point.

    With ``region=True`` each pair contributes the largest correlation over
    the lags spanned by the point's cell instead of the single rounded lag,
    so narrow whitened peaks falling between grid points are not missed.
    """
    corr = np.ascontiguousarray(bank.corr, dtype=np.float64)
    if region:
        low, width = grid.wrapped_region(bank.frame_length)
        return _kernels.region_energies(corr, low, width)
    return _kernels.grid_energies(corr, grid.wrapped_table(bank.frame_length))


def direction_search(bank: CrossCorrelationBank, grid: SphericalGrid, region: bool = False) -> tuple[int, float]:
    """Grid index maximising the summed pair correlations (lowest index on ties)."""
    e = grid_energies(bank, grid, region)
    best = int(np.argmax(e))
    return best, float(e[best])


def multi_source_search(
    bank: CrossCorrelationBank,
    grid: SphericalGrid,
    Q: int = 4,
    e_threshold: float | None = None,
    zero_halfwidth: int = 1,
    region: bool = False,
) -> list[PotentialSource]:
    """Find the ``Q`` loudest directions, removing each one's lags before the next.

    The found direction's lags are zeroed at ``tau`` and ``tau +- zero_halfwidth``
    on a copy of the correlations (the whole cell's lag range when ``region``).
    """
    if Q < 1:
        raise ValueError("Q must be at least 1")
    if e_threshold is None:
        e_threshold = energy_threshold(bank.n_pairs)
    corr = np.array(bank.corr, dtype=np.float64, order="C", copy=True)
    if region:
        low, width = grid.wrapped_region(bank.frame_length)
    else:
        low, width = grid.wrapped_table(bank.frame_length), grid.zero_width()
    idx, energies = _kernels.multi_source_search(corr, low, width, Q, zero_halfwidth)
    nu = energies[0] / e_threshold
    return [
        PotentialSource(grid.directions[i].copy(), float(e), source_confidence(q, nu), int(i))
        for q, (i, e) in enumerate(zip(idx, energies))
    ]


def local_grid(coarse, step_deg: float = 1.25, points: int = 5) -> np.ndarray:
    """``points x points`` directions around ``coarse`` in azimuth/elevation steps."""
    e_az, e_el = tangent_basis(coarse)
    offsets = np.tan(np.radians(step_deg)) * (np.arange(points) - (points - 1) / 2)
    a, b = np.meshgrid(offsets, offsets, indexing="ij")
    dirs = unit(np.asarray(coarse)[None, None, :] + a[..., None] * e_az + b[..., None] * e_el)
    return dirs.reshape(-1, 3)


def refine_direction(
    bank: CrossCorrelationBank,
    coarse,
    mic_positions,
    fs: float,
    c: float = SPEED_OF_SOUND,
    distances=REFINE_DISTANCES,
    step_deg: float = 1.25,
    upsample: int = 8,
) -> np.ndarray:
    """Search a 5x5x5 azimuth/elevation/distance grid around ``coarse``.

    Delays use the near-field model and fractional lags are read from a
    band-limited interpolation of the correlations.  Only the direction is
    returned.
    """
    mics = centred(mic_positions)
    dirs = local_grid(coarse, step_deg)
    d = np.asarray(distances, dtype=float)
    points = d[:, None, None] * dirs[None, :, :]
    tau = near_field_tdoa(points.reshape(-1, 3), mics, fs, c)
    energies = bank.interpolate(tau, upsample).sum(axis=1)
    best = int(np.argmax(energies))
    return dirs[best % len(dirs)].copy()


def write_detections(path, rows) -> None:
    """CSV: frame_index, q, azimuth_deg, elevation_deg, energy, P_q.

    ``rows`` yields ``(frame_index, [PotentialSource, ...])``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "q", "azimuth_deg", "elevation_deg", "energy", "P_q"])
        for frame, sources in rows:
            for q, s in enumerate(sources):
                az, el = azimuth_elevation(s.direction)
                w.writerow([frame, q, f"{az:.4f}", f"{el:.4f}", f"{s.energy:.6g}", f"{s.confidence:.6f}"])


def read_detections(path) -> dict[int, list[PotentialSource]]:
    from ..geometry import direction

    out: dict[int, list[PotentialSource]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            u = direction(float(row["azimuth_deg"]), float(row["elevation_deg"]))
            out.setdefault(int(row["frame_index"]), []).append(
                PotentialSource(u, float(row["energy"]), float(row["P_q"]))
            )
    return out
