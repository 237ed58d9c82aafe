"""Run orchestration: per-scan pipeline state, label emission, evaluation.

The per-scan order is fixed: integrate the scan into the map, extract the
change seeds, convolve scores, auto-threshold, classify (with temporal
retention), dilate, label.  Scans are strictly sequential because the map is
a serial dependency; delayed mode only re-orders emission.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .config import Config
from .core import Pose, build_transition_model
from .detect import (
    DelayedLabeler,
    TemporalDynamicMap,
    classify_dynamic,
    convolve_scores,
    dilate_mask,
    extract_changes,
    label_points,
    otsu_threshold,
)
from .errors import ManifestError, MosvoxError
from .evaluate import ConfusionCounts, accumulate, format_table, iou
from .integrate import build_voxelized_scan, integrate_scan
from .scan_io import read_labels, read_poses, read_scan, write_labels, write_ply
from .voxelmap import VoxelMap

log = logging.getLogger(__name__)


@dataclass
class ScanStats:
    scan_index: int
    n_points: int
    n_observed: int
    n_changes: int
    threshold: int
    n_dynamic_voxels: int
    n_dynamic_points: int
    tdm_size: int
    seconds: float


@dataclass
class ScanResult:
    scan_index: int
    labels: np.ndarray
    dynamic_packed: np.ndarray
    point_packed: np.ndarray
    stats: ScanStats


class Pipeline:
    """Stateful scan-by-scan processor producing online labels."""

    def __init__(self, config: Config, backend=None):
        self.config = config
        self.backend = backend if backend is not None else _kernels.active()
        self.map = VoxelMap(config.delta, backend=self.backend)
        self.tdm = TemporalDynamicMap()
        self.model = build_transition_model(config.self_transition)

    def process(self, points: np.ndarray, pose: Pose, k: int) -> ScanResult:
        cfg = self.config
        t0 = time.perf_counter()
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        keep = np.linalg.norm(pts, axis=1) >= cfg.min_range
        vscan = build_voxelized_scan(pose.apply(pts), pose.translation, cfg.delta, keep)
        observed = integrate_scan(
            self.map, vscan, cfg, k, model=self.model, backend=self.backend
        )
        changes = extract_changes(vscan, self.map, k, cfg.w_local)
        scores = convolve_scores(
            vscan, self.map, k, cfg.kernel_size, cfg.w_local, backend=self.backend
        )
        threshold = otsu_threshold(scores, cfg.otsu_min)
        dynamic = classify_dynamic(
            vscan.packed, scores, threshold, self.tdm, k, cfg.w_dynamic
        )
        dilated = dilate_mask(dynamic, vscan.packed, cfg.dilation_radius, self.backend)
        labels = label_points(vscan, dilated)

        point_packed = np.full(vscan.n_points, -1, dtype=np.int64)
        valid = vscan.point_to_key >= 0
        point_packed[valid] = vscan.packed[vscan.point_to_key[valid]]

        seconds = time.perf_counter() - t0
        stats = ScanStats(
            scan_index=k,
            n_points=pts.shape[0],
            n_observed=int(observed.packed.size),
            n_changes=int(changes.shape[0]),
            threshold=threshold,
            n_dynamic_voxels=int(np.count_nonzero(dilated)),
            n_dynamic_points=int(np.count_nonzero(labels)),
            tdm_size=len(self.tdm),
            seconds=seconds,
        )
        log.debug(
            "scan %d: %d pts, %d observed, %d changes, thr %d, %d dyn voxels, %.1f ms",
            k, stats.n_points, stats.n_observed, stats.n_changes,
            threshold, stats.n_dynamic_voxels, seconds * 1e3,
        )
        return ScanResult(k, labels, vscan.packed[dilated], point_packed, stats)


@dataclass
class RunManifest:
    scan_paths: list
    pose_path: Path
    out_dir: Path
    config: Config
    gt_dir: Path | None = None
    range_limit: float | None = None
    export_ply_dir: Path | None = None
    scan_format: str = "kitti-bin"


_SCAN_SUFFIX = {"kitti-bin": "*.bin", "ply-ascii": "*.ply"}


def build_manifest(
    scan_dir,
    pose_path,
    out_dir,
    config: Config,
    gt_dir=None,
    range_limit=None,
    export_ply_dir=None,
    scan_format: str = "kitti-bin",
) -> RunManifest:
    """Collect and sanity-check run inputs; scans pair with poses by sorted
    filename order."""
    scan_dir = Path(scan_dir)
    if not scan_dir.is_dir():
        raise ManifestError(f"scan directory not found: {scan_dir}")
    if scan_format not in _SCAN_SUFFIX:
        raise ManifestError(f"unknown scan format {scan_format!r}")
    scan_paths = sorted(scan_dir.glob(_SCAN_SUFFIX[scan_format]))
    if not scan_paths:
        raise ManifestError(f"no {scan_format} scans in {scan_dir}")
    pose_path = Path(pose_path)
    if not pose_path.is_file():
        raise ManifestError(f"pose file not found: {pose_path}")
    if gt_dir is not None:
        gt_dir = Path(gt_dir)
        if not gt_dir.is_dir():
            raise ManifestError(f"ground-truth directory not found: {gt_dir}")
    return RunManifest(
        scan_paths=scan_paths,
        pose_path=pose_path,
        out_dir=Path(out_dir),
        config=config,
        gt_dir=gt_dir,
        range_limit=range_limit,
        export_ply_dir=Path(export_ply_dir) if export_ply_dir else None,
        scan_format=scan_format,
    )


@dataclass
class RunReport:
    stats: list
    label_paths: list
    confusion: ConfusionCounts | None
    iou: float | None
    mean_latency: float
    p95_latency: float
    map_size: int

    def latency_line(self) -> str:
        return (
            f"processed {len(self.stats)} scans: "
            f"mean {self.mean_latency * 1e3:.1f} ms/scan, "
            f"p95 {self.p95_latency * 1e3:.1f} ms/scan, map {self.map_size} voxels"
        )

    def table(self, name: str = "sequence") -> str | None:
        if self.confusion is None:
            return None
        return format_table([(name, self.confusion)])


def run(manifest: RunManifest) -> RunReport:
    """Process a full sequence and write one label file per scan.

    Label files are named after the scan stems.  When ground truth is
    present (possibly only for some scans), a confusion total and IoU are
    reported over the labeled scans at the manifest's range limit.
    """
    config = manifest.config
    poses = read_poses(manifest.pose_path)
    if len(poses) != len(manifest.scan_paths):
        raise ManifestError(
            f"scan/pose count mismatch: {len(manifest.scan_paths)} scans vs "
            f"{len(poses)} poses"
        )
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    if manifest.export_ply_dir is not None:
        manifest.export_ply_dir.mkdir(parents=True, exist_ok=True)

    pipeline = Pipeline(config)
    delayed = DelayedLabeler(config.w_local) if config.mode == "delayed" else None
    pending: dict[int, tuple[str, np.ndarray]] = {}
    stats: list[ScanStats] = []
    label_paths: list[Path] = []
    confusion: ConfusionCounts | None = None

    def emit(index: int, labels: np.ndarray):
        nonlocal confusion
        stem, points = pending.pop(index)
        label_path = manifest.out_dir / f"{stem}.label"
        write_labels(labels, label_path)
        label_paths.append(label_path)
        if manifest.export_ply_dir is not None:
            write_ply(points, labels, manifest.export_ply_dir / f"{stem}.ply")
        if manifest.gt_dir is not None:
            gt_path = manifest.gt_dir / f"{stem}.label"
            if gt_path.is_file():
                gt = read_labels(gt_path)
                counts = accumulate(gt, labels, points, manifest.range_limit)
                confusion = counts if confusion is None else confusion + counts

    for k, path in enumerate(manifest.scan_paths):
        try:
            scan = read_scan(path, manifest.scan_format, k)
            result = pipeline.process(scan.points, poses[k], k)
        except MosvoxError as exc:
            raise type(exc)(f"scan {k} ({path.name}): {exc}") from exc
        stats.append(result.stats)
        pending[k] = (path.stem, scan.points)
        if delayed is None:
            emit(k, result.labels)
        else:
            for index, labels in delayed.push(
                k, result.labels, result.point_packed, result.dynamic_packed
            ):
                emit(index, labels)
    if delayed is not None:
        for index, labels in delayed.flush():
            emit(index, labels)

    latencies = np.array([s.seconds for s in stats])
    report = RunReport(
        stats=stats,
        label_paths=label_paths,
        confusion=confusion,
        iou=None if confusion is None else iou(confusion),
        mean_latency=float(latencies.mean()) if latencies.size else 0.0,
        p95_latency=float(np.percentile(latencies, 95)) if latencies.size else 0.0,
        map_size=len(pipeline.map),
    )
    log.info(report.latency_line())
    return report
