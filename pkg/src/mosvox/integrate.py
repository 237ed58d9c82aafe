"""Per-scan front end: pose transform, voxelization, raycasting, and the
truncated distance field that turns observations into occupancy likelihoods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .config import Config
from .core import (
    Pose,
    TransitionModel,
    build_transition_model,
    pack_keys,
    unpack_keys,
    voxelize_point,
    voxelize_points,
)
from .voxelmap import VoxelMap

# Above this many hit-times-offset probes the splatting EDF kernel loses to
# the KD-tree fallback; switch over.
_EDF_SPLAT_BUDGET = 30_000_000


@dataclass
class VoxelizedScan:
    """Deduplicated voxel view of one scan in the map frame.

    keys/packed list each hit voxel once (packed is sorted); point_to_key
    maps every scan point to its row in keys, with -1 for points dropped by
    the minimum-range filter.
    """

    keys: np.ndarray
    packed: np.ndarray
    point_to_key: np.ndarray
    sensor_key: np.ndarray
    sensor_origin: np.ndarray

    @property
    def n_points(self) -> int:
        return int(self.point_to_key.shape[0])


@dataclass
class ObservationSet:
    """Observed voxels of one scan with their EDF and occupancy likelihood,
    all aligned with ``packed`` (sorted)."""

    keys: np.ndarray
    packed: np.ndarray
    edf: np.ndarray
    likelihood: np.ndarray


def transform_scan(points: np.ndarray, pose: Pose) -> np.ndarray:
    """Sensor-frame points into the map frame, order preserved."""
    return pose.apply(points)


def build_voxelized_scan(
    map_points: np.ndarray,
    sensor_origin,
    delta: float,
    keep: np.ndarray | None = None,
) -> VoxelizedScan:
    pts = np.asarray(map_points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if keep is None:
        keep = np.ones(n, dtype=bool)
    point_to_key = np.full(n, -1, dtype=np.int64)
    kept = pts[keep]
    if kept.shape[0]:
        packed_points = pack_keys(voxelize_points(kept, delta))
        packed = np.unique(packed_points)
        point_to_key[keep] = np.searchsorted(packed, packed_points)
        keys = unpack_keys(packed)
    else:
        packed = np.empty(0, dtype=np.int64)
        keys = np.empty((0, 3), dtype=np.int64)
    return VoxelizedScan(
        keys=keys,
        packed=packed,
        point_to_key=point_to_key,
        sensor_key=voxelize_point(sensor_origin, delta),
        sensor_origin=np.asarray(sensor_origin, dtype=np.float64).reshape(3),
    )


def raycast(start, end, backend=None) -> np.ndarray:
    """3D Bresenham cell list between two voxel keys, endpoints included."""
    backend = backend if backend is not None else _kernels.active()
    return backend.raycast_line(
        np.asarray(start, dtype=np.int64), np.asarray(end, dtype=np.int64)
    )


def enumerate_observed(
    vscan: VoxelizedScan, r_max: float, delta: float, backend=None
):
    """All voxels traversed by the scan's rays, each ray truncated at
    floor(r_max / delta) cells from the sensor.

    The sensor's own cell is excluded (never marked free); hit cells are
    included whenever their ray reaches them.  Returns (keys, packed).
    """
    backend = backend if backend is not None else _kernels.active()
    cap = int(np.floor(r_max / delta))
    packed = backend.trace_rays(vscan.sensor_key, vscan.keys, cap)
    return unpack_keys(packed).reshape(-1, 3), packed


def compute_edf(
    observed_keys: np.ndarray,
    hit_keys: np.ndarray,
    delta: float,
    truncation: float,
    backend=None,
) -> np.ndarray:
    """Distance from each observed voxel to the nearest hit voxel.

    Exact (delta times key-space Euclidean distance) up to ``truncation``
    and clamped there beyond; with no hits every voxel reports truncation.
    ``observed_keys`` must be duplicate-free (it is a set of voxels).
    """
    if truncation <= 0:
        raise ValueError(f"truncation must be positive, got {truncation}")
    backend = backend if backend is not None else _kernels.active()
    hits = np.asarray(hit_keys, dtype=np.int64).reshape(-1, 3)
    ball = (2 * int(np.ceil(truncation / delta)) + 1) ** 3
    if ball * max(hits.shape[0], 1) > _EDF_SPLAT_BUDGET:
        backend = _kernels.get_backend("pure")
    return backend.edf_distances(
        np.asarray(observed_keys, dtype=np.int64).reshape(-1, 3),
        hits,
        float(delta),
        float(truncation),
    )


def occupancy_likelihood(distance, sigma_o: float):
    """Unnormalized Gaussian exp(-d^2 / (2 sigma_o^2)); scalar or array."""
    d = np.asarray(distance, dtype=np.float64)
    out = np.exp(-(d * d) / (2.0 * sigma_o * sigma_o))
    return float(out) if np.isscalar(distance) else out


def integrate_scan(
    vmap: VoxelMap,
    vscan: VoxelizedScan,
    config: Config,
    k: int,
    model: TransitionModel | None = None,
    backend=None,
) -> ObservationSet:
    """Observe one scan into the map: raycast, EDF likelihoods, one HMM
    update per observed voxel, then retention pruning."""
    if model is None:
        model = build_transition_model(config.self_transition)
    observed_keys, observed_packed = enumerate_observed(
        vscan, config.r_max, config.delta, backend=backend
    )
    edf = compute_edf(
        observed_keys, vscan.keys, config.delta, config.edf_truncation, backend=backend
    )
    likelihood = occupancy_likelihood(edf, config.sigma_o)
    vmap.observe_batch(observed_packed, observed_keys, likelihood, model, config.p_min, k)
    vmap.prune(k, vscan.sensor_origin, config.r_max, config.w_global)
    return ObservationSet(
        keys=observed_keys, packed=observed_packed, edf=edf, likelihood=likelihood
    )
