"""Icosahedral search grid on the unit sphere and TDOA lookup tables."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import SPEED_OF_SOUND, mic_pairs

logger = logging.getLogger(__name__)

CACHE_VERSION = 2

_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTICES = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


@dataclass
class SphericalGrid:
    directions: np.ndarray
    triangles: np.ndarray
    subdivision_levels: int
    tdoa_table: np.ndarray | None = None
    region_low: np.ndarray | None = None
    region_width: np.ndarray | None = None

    def wrapped_table(self, L: int) -> np.ndarray:
        """TDOA table as ``tau mod L``, int32 and C-contiguous for the kernels."""
        if self.tdoa_table is None:
            raise ValueError("TDOA table not built; call build_tdoa_table first")
        cached = getattr(self, "_wrapped", None)
        if cached is None or cached[0] != L or cached[1] is not self.tdoa_table:
            w = np.ascontiguousarray(np.mod(self.tdoa_table, L), dtype=np.int32)
            cached = (L, self.tdoa_table, w)
            self._wrapped = cached
        return cached[2]

    def wrapped_region(self, L: int) -> tuple[np.ndarray, np.ndarray]:
        """Lowest lag (mod ``L``) and lag span of every cell, int32 for the kernels."""
        if self.region_low is None:
            raise ValueError("region tables not built; call build_tdoa_table first")
        cached = getattr(self, "_wrapped_region", None)
        if cached is None or cached[0] != L or cached[1] is not self.region_low:
            low = np.ascontiguousarray(np.mod(self.region_low, L), dtype=np.int32)
            width = np.ascontiguousarray(self.region_width, dtype=np.int32)
            cached = (L, self.region_low, low, width)
            self._wrapped_region = cached
        return cached[2], cached[3]

    def zero_width(self) -> np.ndarray:
        """Width table for exact-point lookups."""
        return np.zeros(self.tdoa_table.shape, dtype=np.int32)

    @property
    def n_directions(self) -> int:
        return len(self.directions)

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def nearest(self, u) -> np.ndarray:
        """Index of the grid direction closest to each ``u``."""
        return np.argmax(np.atleast_2d(u) @ self.directions.T, axis=1)


def build_grid(levels: int) -> SphericalGrid:
    """Subdivide the icosahedron ``levels`` times, projecting onto the sphere."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTICES]
    faces = _ICO_FACES.copy()
    for _ in range(levels):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = len(verts) - 1
                midpoint[key] = idx
            return idx

        new_faces = np.empty((4 * len(faces), 3), dtype=np.int64)
        for n, (a, b, c) in enumerate(faces):
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces[4 * n : 4 * n + 4] = [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    return SphericalGrid(np.array(verts), faces, levels)


def far_field_tdoa(directions, mic_positions, fs: float, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Fractional TDOA ``(fs/c) (p_i - p_j) . u`` for every direction and pair ``i<j``."""
    p = np.asarray(mic_positions, dtype=float)
    pairs = mic_pairs(len(p))
    baselines = p[pairs[:, 0]] - p[pairs[:, 1]]
    return (fs / c) * np.atleast_2d(directions) @ baselines.T


def near_field_tdoa(points, mic_positions, fs: float, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """TDOA ``(fs/c)(|s - p_j| - |s - p_i|)`` for source points ``s`` (metres)."""
    p = np.asarray(mic_positions, dtype=float)
    pairs = mic_pairs(len(p))
    s = np.atleast_2d(points)
    dist = np.linalg.norm(s[..., None, :] - p, axis=-1)
    return (fs / c) * (dist[..., pairs[:, 1]] - dist[..., pairs[:, 0]])


def cell_boundary_points(grid: SphericalGrid) -> tuple[np.ndarray, np.ndarray]:
    """Edge midpoints and triangle centroids, each tagged with its grid vertex.

    Together with the vertex itself they outline the hexagonal (pentagonal
    for the 12 original vertices) cell around every grid point.
    """
    d = grid.directions
    e = grid.edges()
    mids = d[e[:, 0]] + d[e[:, 1]]
    t = grid.triangles
    cents = d[t[:, 0]] + d[t[:, 1]] + d[t[:, 2]]
    pts = np.concatenate([mids, mids, cents, cents, cents])
    owner = np.concatenate([e[:, 0], e[:, 1], t[:, 0], t[:, 1], t[:, 2]])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True), owner


def build_region_tables(grid: SphericalGrid, mic_positions, fs: float, c: float = SPEED_OF_SOUND):
    """Rounded TDOA range covered by each grid cell: ``(low, width)``."""
    tau = far_field_tdoa(grid.directions, mic_positions, fs, c)
    lo = tau.copy()
    hi = tau.copy()
    pts, owner = cell_boundary_points(grid)
    tb = far_field_tdoa(pts, mic_positions, fs, c)
    np.minimum.at(lo, owner, tb)
    np.maximum.at(hi, owner, tb)
    low = np.rint(lo).astype(np.int32)
    width = (np.rint(hi).astype(np.int32) - low).astype(np.int32)
    grid.region_low = low
    grid.region_width = width
    return low, width


def build_tdoa_table(grid: SphericalGrid, mic_positions, fs: float, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Rounded far-field TDOA in samples, shape ``(directions, pairs)``.

    The per-cell lag ranges used by the region search are built alongside.
    """
    p = np.asarray(mic_positions, dtype=float)
    pairs = mic_pairs(len(p))
    zero = np.linalg.norm(p[pairs[:, 0]] - p[pairs[:, 1]], axis=1) == 0
    if np.any(zero):
        logger.warning("coincident microphones in pairs %s; their delay is fixed at 0", pairs[zero].tolist())
    table = np.rint(far_field_tdoa(grid.directions, p, fs, c)).astype(np.int32)
    grid.tdoa_table = table
    build_region_tables(grid, p, fs, c)
    return table


def geometry_key(mic_positions, fs: float, c: float, levels: int) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(np.asarray(mic_positions, dtype=np.float64)).tobytes())
    h.update(np.array([fs, c, levels], dtype=np.float64).tobytes())
    return h.hexdigest()


def load_or_build(
    mic_positions,
    fs: float,
    c: float = SPEED_OF_SOUND,
    levels: int = 4,
    cache_path: str | Path | None = None,
) -> tuple[SphericalGrid, np.ndarray]:
    """Grid and TDOA table, reusing ``cache_path`` when its key matches."""
    key = geometry_key(mic_positions, fs, c, levels)
    if cache_path is not None and Path(cache_path).exists():
        try:
            with np.load(cache_path) as f:
                if int(f["version"]) == CACHE_VERSION and str(f["key"]) == key:
                    grid = SphericalGrid(
                        f["directions"], f["triangles"], int(f["levels"]), f["tdoa"],
                        f["region_low"], f["region_width"],
                    )
                    return grid, grid.tdoa_table
        except (OSError, KeyError, ValueError):
            logger.warning("ignoring unreadable grid cache %s", cache_path)
    grid = build_grid(levels)
    table = build_tdoa_table(grid, mic_positions, fs, c)
    if cache_path is not None:
        save_cache(cache_path, grid, table, key)
    return grid, table


def save_cache(path, grid: SphericalGrid, table: np.ndarray, key: str) -> None:
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.int64(CACHE_VERSION),
            key=np.array(key),
            levels=np.int64(grid.subdivision_levels),
            directions=grid.directions,
            triangles=grid.triangles,
            tdoa=table,
            region_low=grid.region_low,
            region_width=grid.region_width,
        )
