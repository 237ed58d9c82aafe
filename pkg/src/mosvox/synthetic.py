"""Desk-scale synthetic scenes with exact per-point ground truth.

Scans are produced by analytic ray casting (quadratic sphere intersection
and slab-method boxes, never grid-based), so generator error cannot mask
pipeline error.  Output uses the same scan/pose/label formats as real data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import Pose
from .errors import ConfigError
from .scan_io import Scan, write_labels, write_poses, write_scan

_T_MIN = 1e-9


@dataclass(frozen=True)
class Mover:
    """Rigid mover on a linear path; center(t) = start + velocity * t."""

    shape: str  # "sphere" or "box"
    size: tuple  # sphere: (radius,); box: (ex, ey, ez) full extents
    start: tuple
    velocity: tuple

    def center(self, t: float) -> np.ndarray:
        return np.asarray(self.start) + np.asarray(self.velocity) * t

    def half_extent(self) -> np.ndarray:
        if self.shape == "sphere":
            return np.full(3, self.size[0])
        return np.asarray(self.size) / 2.0


@dataclass(frozen=True)
class StaticBox:
    center: tuple
    extents: tuple


@dataclass(frozen=True)
class SceneSpec:
    room_min: tuple
    room_max: tuple
    movers: tuple
    statics: tuple
    sensor_start: tuple
    sensor_velocity: tuple
    rays_horizontal: int
    rays_vertical: int
    v_fov_deg: tuple
    rate: float
    count: int
    seed: int
    range_jitter: float = 0.0

    @property
    def duration(self) -> float:
        return self.count / self.rate

    def sensor_origin(self, t: float) -> np.ndarray:
        return np.asarray(self.sensor_start) + np.asarray(self.sensor_velocity) * t

    def validate(self):
        lo = np.asarray(self.room_min, dtype=float)
        hi = np.asarray(self.room_max, dtype=float)
        if np.any(hi <= lo):
            raise ConfigError("room extents must be positive")
        if self.rays_horizontal < 1 or self.rays_vertical < 1:
            raise ConfigError("rays-per-scan must be positive")
        if self.rate <= 0 or self.count < 1:
            raise ConfigError("rate and count must be positive")
        for mover in self.movers:
            if mover.shape not in ("sphere", "box"):
                raise ConfigError(f"unknown mover shape {mover.shape!r}")
            if np.any(np.asarray(mover.size) <= 0):
                raise ConfigError("zero-size mover")
            half = mover.half_extent()
            # linear paths: checking both endpoints bounds the whole run
            for t in (0.0, self.duration):
                c = mover.center(t)
                if np.any(c - half < lo) or np.any(c + half > hi):
                    raise ConfigError(
                        f"mover leaves the room at t={t:.2f}s (center {c})"
                    )
        for t in (0.0, self.duration):
            o = self.sensor_origin(t)
            if np.any(o <= lo) or np.any(o >= hi):
                raise ConfigError("sensor origin must stay strictly inside the room")


def reference_scene(count: int = 120, seed: int = 7, range_jitter: float = 0.0) -> SceneSpec:
    """The frozen regression scene: 20x20x5 m room, one 0.5 m sphere at
    1 m/s, one 1x1x2 m box at 0.5 m/s, a static pillar, static sensor at
    room center, 32 x 360 rays, 10 scans/s."""
    return SceneSpec(
        room_min=(0.0, 0.0, 0.0),
        room_max=(20.0, 20.0, 5.0),
        movers=(
            Mover("sphere", (0.5,), (5.0, 7.0, 1.5), (1.0, 0.0, 0.0)),
            Mover("box", (1.0, 1.0, 2.0), (14.0, 13.0, 1.75), (-0.5, 0.0, 0.0)),
        ),
        statics=(StaticBox((15.5, 15.5, 2.5), (0.6, 0.6, 5.0)),),
        sensor_start=(10.0, 10.0, 2.5),
        sensor_velocity=(0.0, 0.0, 0.0),
        rays_horizontal=360,
        rays_vertical=32,
        v_fov_deg=(-22.5, 22.5),
        rate=10.0,
        count=count,
        seed=seed,
        range_jitter=range_jitter,
    )


def scene_variant(spec: SceneSpec, **changes) -> SceneSpec:
    return replace(spec, **changes)


def ray_directions(spec: SceneSpec) -> np.ndarray:
    """Unit direction grid, azimuth-major: (rays_vertical * rays_horizontal, 3)."""
    az = 2.0 * np.pi * np.arange(spec.rays_horizontal) / spec.rays_horizontal
    el = np.radians(np.linspace(spec.v_fov_deg[0], spec.v_fov_deg[1], spec.rays_vertical))
    azg, elg = np.meshgrid(az, el, indexing="ij")
    cos_el = np.cos(elg)
    dirs = np.stack(
        [cos_el * np.cos(azg), cos_el * np.sin(azg), np.sin(elg)], axis=-1
    )
    return dirs.reshape(-1, 3)


def _room_exit(origin, dirs, lo, hi):
    """Distance to the room shell from an interior origin."""
    t = np.full(dirs.shape[0], np.inf)
    for ax in range(3):
        d = dirs[:, ax]
        pos = d > 0
        neg = d < 0
        t_ax = np.full(dirs.shape[0], np.inf)
        t_ax[pos] = (hi[ax] - origin[ax]) / d[pos]
        t_ax[neg] = (lo[ax] - origin[ax]) / d[neg]
        t = np.minimum(t, t_ax)
    return t


def _box_hit(origin, dirs, lo, hi):
    """Slab-method AABB entry distance; inf where the ray misses."""
    n = dirs.shape[0]
    tnear = np.full(n, -np.inf)
    tfar = np.full(n, np.inf)
    for ax in range(3):
        d = dirs[:, ax]
        parallel = d == 0.0
        d_safe = np.where(parallel, 1.0, d)
        t1 = (lo[ax] - origin[ax]) / d_safe
        t2 = (hi[ax] - origin[ax]) / d_safe
        lo_t = np.minimum(t1, t2)
        hi_t = np.maximum(t1, t2)
        outside = parallel & ((origin[ax] < lo[ax]) | (origin[ax] > hi[ax]))
        lo_t = np.where(parallel, -np.inf, lo_t)
        hi_t = np.where(parallel, np.inf, hi_t)
        lo_t = np.where(outside, np.inf, lo_t)
        tnear = np.maximum(tnear, lo_t)
        tfar = np.minimum(tfar, hi_t)
    hit = (tnear <= tfar) & (tnear > _T_MIN)
    return np.where(hit, tnear, np.inf)


def _sphere_hit(origin, dirs, center, radius):
    """Nearest positive quadratic root; inf where the ray misses."""
    oc = origin - center
    b = dirs @ oc
    c0 = oc @ oc - radius * radius
    disc = b * b - c0
    ok = disc >= 0.0
    t = np.full(dirs.shape[0], np.inf)
    root = np.sqrt(np.where(ok, disc, 0.0))
    cand = -b - root
    hit = ok & (cand > _T_MIN)
    t[hit] = cand[hit]
    return t


def generate(spec: SceneSpec):
    """Render every scan of the scene.

    Returns (scans, poses, labels): sensor-frame Scan objects, the matching
    identity-rotation poses, and exact boolean dynamic masks (True for
    points on movers).  Deterministic for a fixed seed.
    """
    spec.validate()
    lo = np.asarray(spec.room_min, dtype=float)
    hi = np.asarray(spec.room_max, dtype=float)
    dirs = ray_directions(spec)
    rng = np.random.default_rng(spec.seed)
    scans, poses, labels = [], [], []
    for k in range(spec.count):
        t_scan = k / spec.rate
        origin = spec.sensor_origin(t_scan)
        candidates = [_room_exit(origin, dirs, lo, hi)]
        for static in spec.statics:
            c = np.asarray(static.center)
            e = np.asarray(static.extents) / 2.0
            candidates.append(_box_hit(origin, dirs, c - e, c + e))
        first_mover = len(candidates)
        for mover in spec.movers:
            c = mover.center(t_scan)
            if mover.shape == "sphere":
                candidates.append(_sphere_hit(origin, dirs, c, mover.size[0]))
            else:
                e = np.asarray(mover.size) / 2.0
                candidates.append(_box_hit(origin, dirs, c - e, c + e))
        t_all = np.stack(candidates, axis=0)
        winner = np.argmin(t_all, axis=0)
        t_hit = t_all[winner, np.arange(dirs.shape[0])]
        if not np.all(np.isfinite(t_hit)):
            raise ConfigError("open scene geometry: some rays never hit a surface")
        dynamic = winner >= first_mover
        if spec.range_jitter > 0.0:
            t_hit = t_hit + rng.uniform(
                -spec.range_jitter, spec.range_jitter, size=t_hit.shape
            )
            t_hit = np.maximum(t_hit, 1e-3)
        points = t_hit[:, None] * dirs  # sensor frame
        scans.append(Scan(points, scan_index=k))
        poses.append(Pose(np.eye(3), origin))
        labels.append(dynamic)
    return scans, poses, labels


def write_dataset(spec: SceneSpec, out_dir) -> dict:
    """Materialize a scene as scans/, poses.txt, and labels/ under out_dir."""
    out = Path(out_dir)
    scan_dir = out / "scans"
    label_dir = out / "labels"
    scan_dir.mkdir(parents=True, exist_ok=True)
    label_dir.mkdir(parents=True, exist_ok=True)
    scans, poses, labels = generate(spec)
    for scan, label in zip(scans, labels):
        stem = f"{scan.scan_index:06d}"
        write_scan(scan.points, scan_dir / f"{stem}.bin")
        write_labels(label, label_dir / f"{stem}.label")
    write_poses(poses, out / "poses.txt")
    return {
        "scan_dir": scan_dir,
        "pose_file": out / "poses.txt",
        "label_dir": label_dir,
        "count": spec.count,
    }


def oracle_iou(gt_labels, pred_labels) -> float:
    """Dynamic-class IoU of predictions against the generator's exact labels."""
    from .evaluate import ConfusionCounts, accumulate, iou

    total = ConfusionCounts()
    for gt, pred in zip(gt_labels, pred_labels, strict=True):
        total = total + accumulate(gt, pred)
    return iou(total)
