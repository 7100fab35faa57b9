"""Direction conventions and the default microphone array.

Azimuth is measured in the horizontal plane from +x towards +y (positive to
the left), elevation upwards from the horizontal plane.  All directions are
unit vectors in the array frame, whose origin is the array centroid.
"""

from __future__ import annotations

import numpy as np

SPEED_OF_SOUND = 343.0

# 16 cm open cube, one microphone per vertex.
CUBE_ARRAY = 0.08 * np.array(
    [
        [1, 1, 1],
        [1, 1, -1],
        [1, -1, 1],
        [1, -1, -1],
        [-1, 1, 1],
        [-1, 1, -1],
        [-1, -1, 1],
        [-1, -1, -1],
    ],
    dtype=float,
)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def direction(azimuth_deg, elevation_deg=0.0) -> np.ndarray:
    az = np.radians(azimuth_deg)
    el = np.radians(elevation_deg)
    return np.stack(
        np.broadcast_arrays(np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)),
        axis=-1,
    )


def azimuth_elevation(u) -> tuple[np.ndarray, np.ndarray]:
    """Degrees; azimuth in (-180, 180]."""
    u = unit(u)
    az = np.degrees(np.arctan2(u[..., 1], u[..., 0]))
    el = np.degrees(np.arcsin(np.clip(u[..., 2], -1.0, 1.0)))
    return az, el


def angle_between(u, v) -> np.ndarray:
    """Great-circle angle in degrees."""
    u = unit(u)
    v = unit(v)
    c = np.clip(np.sum(u * v, axis=-1), -1.0, 1.0)
    # atan2 form keeps precision for tiny angles
    s = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.degrees(np.arctan2(s, c))


def wrap_degrees(a) -> np.ndarray:
    return (np.asarray(a) + 180.0) % 360.0 - 180.0


def mic_pairs(n_mics: int) -> np.ndarray:
    """Unordered pairs ``(i, j)`` with ``i < j``, shape ``(n*(n-1)/2, 2)``."""
    i, j = np.triu_indices(n_mics, k=1)
    return np.stack([i, j], axis=1)


def centred(mic_positions) -> np.ndarray:
    p = np.asarray(mic_positions, dtype=float)
    return p - p.mean(axis=0)


def tangent_basis(u) -> tuple[np.ndarray, np.ndarray]:
    """Azimuthal and elevation unit tangents at direction ``u``."""
    u = unit(u)
    e_az = np.array([-u[1], u[0], 0.0])
    if np.linalg.norm(e_az) < 1e-9:
        e_az = np.array([0.0, 1.0, 0.0])
    e_az = unit(e_az)
    e_el = unit(np.cross(u, e_az))
    return e_az, e_el
