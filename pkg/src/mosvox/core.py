"""Grid arithmetic, rigid poses, and the voxel occupancy transition model.

Voxel keys are signed integer grid indices at resolution ``delta``; the grid
origin coincides with the map-frame origin, so unbounded worlds need no
re-centering.  Keys are packed into a single int64 for hashing and set
arithmetic (21 bits per axis, biased).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError


class OccupancyState(IntEnum):
    UNOBSERVED = 0
    OCCUPIED = 1
    FREE = 2


class ChangeKind(IntEnum):
    NONE = 0
    FREE_TO_OCCUPIED = 1
    OCCUPIED_TO_FREE = 2


# int64 key packing: 21 bits per axis, biased by 2^20.  The margin keeps
# neighbourhood offset arithmetic (packed + packed_offset) from wrapping
# across axis boundaries.
KEY_BITS = 21
KEY_BIAS = 1 << 20
KEY_MARGIN = 512
KEY_LIMIT = KEY_BIAS - KEY_MARGIN


def voxelize_point(point, delta: float) -> np.ndarray:
    """Map a 3D point to its voxel key: componentwise floor(p / delta).

    Points within one half-open cube [i*delta, (i+1)*delta) share a key.
    Raises ValueError for non-finite coordinates.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    p = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite point coordinate: {point}")
    return np.floor(p / delta).astype(np.int64)


def voxelize_points(points: np.ndarray, delta: float) -> np.ndarray:
    """Vectorized voxelize_point over an (N, 3) array."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size and not np.all(np.isfinite(pts)):
        raise ValueError("non-finite point coordinate in scan")
    return np.floor(pts / delta).astype(np.int64)


def voxel_center(key, delta: float) -> np.ndarray:
    return (np.asarray(key, dtype=np.float64) + 0.5) * delta


def pack_keys(keys: np.ndarray) -> np.ndarray:
    """Pack (N, 3) or (3,) integer keys into int64 hashes (order-preserving
    per axis).  Raises ValueError when an index exceeds the packable range."""
    k = np.asarray(keys, dtype=np.int64)
    single = k.ndim == 1
    k = np.atleast_2d(k)
    if k.size and np.abs(k).max() >= KEY_LIMIT:
        raise ValueError(f"voxel index out of packable range (+-{KEY_LIMIT})")
    packed = (
        ((k[:, 0] + KEY_BIAS) << (2 * KEY_BITS))
        | ((k[:, 1] + KEY_BIAS) << KEY_BITS)
        | (k[:, 2] + KEY_BIAS)
    )
    return packed[0] if single else packed


def unpack_keys(packed) -> np.ndarray:
    """Inverse of pack_keys; returns (N, 3) (or (3,) for a scalar)."""
    p = np.asarray(packed, dtype=np.int64)
    single = p.ndim == 0
    p = np.atleast_1d(p)
    mask = (1 << KEY_BITS) - 1
    out = np.empty((p.shape[0], 3), dtype=np.int64)
    out[:, 0] = (p >> (2 * KEY_BITS)) - KEY_BIAS
    out[:, 1] = ((p >> KEY_BITS) & mask) - KEY_BIAS
    out[:, 2] = (p & mask) - KEY_BIAS
    return out[0] if single else out


def pack_offsets(radius: int) -> np.ndarray:
    """Packed-key deltas for the full (2r+1)^3 Chebyshev neighbourhood.

    Deltas are signed, so this must use arithmetic (not bitwise OR): the
    identity pack(k + d) == pack(k) + delta holds as long as components stay
    inside the packable range.
    """
    r = int(radius)
    d = np.arange(-r, r + 1, dtype=np.int64)
    dx, dy, dz = np.meshgrid(d, d, d, indexing="ij")
    return (
        dx.ravel() * (np.int64(1) << (2 * KEY_BITS))
        + dy.ravel() * (np.int64(1) << KEY_BITS)
        + dz.ravel()
    )


ROTATION_TOL = 1e-6


@dataclass(frozen=True)
class Pose:
    """Rigid transform from sensor frame into the map frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > ROTATION_TOL or abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (deviation {err:.2e})")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 3) points: R @ p + t, order preserved."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self * other).apply(p) == self.apply(other.apply(p))."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (orthogonal Procrustes via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class TransitionModel:
    """Column-stochastic state transition matrix over
    (unobserved, occupied, free); matrix[i, j] = P(next=i | previous=j)."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.float64)
        if a.shape != (3, 3) or np.any(a < 0):
            raise ValueError("transition matrix must be 3x3 with non-negative entries")
        if np.abs(a.sum(axis=0) - 1.0).max() > 1e-12:
            raise ValueError("transition matrix columns must sum to 1")
        if a[0, 1] != 0.0 or a[0, 2] != 0.0:
            raise ValueError("observed states must not transition back to unobserved")
        object.__setattr__(self, "matrix", a)


def build_transition_model(self_transition: float) -> TransitionModel:
    """Transition model with a shared self-transition probability.

    Occupied and free keep ``self_transition`` on the diagonal and leak the
    remainder into each other; the unobserved column splits its leakage
    evenly between occupied and free.  Nothing transitions back into
    unobserved: that state only ever holds until the first observation.
    """
    s = float(self_transition)
    if not 0.0 < s < 1.0:
        raise ConfigError(f"self_transition must lie in (0, 1), got {s}")
    leak = 1.0 - s
    a = np.array(
        [
            [s, 0.0, 0.0],
            [leak / 2.0, s, leak],
            [leak / 2.0, leak, s],
        ]
    )
    return TransitionModel(a)
