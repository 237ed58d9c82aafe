"""Scan, pose, and label I/O.

Formats: kitti-bin scans (little-endian float32 x,y,z,intensity records),
12-numbers-per-line pose files (row-major 3x4, rotation | translation),
4-byte-per-point label files (lower 16 bits: 251 dynamic / 9 static), and
ply-ascii for debug clouds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Pose, nearest_rotation
from .errors import FormatError

log = logging.getLogger(__name__)

STATIC_LABEL = 9
DYNAMIC_LABEL = 251

SCAN_FORMATS = ("kitti-bin", "ply-ascii")


@dataclass
class Scan:
    """Sensor-frame points of one scan."""

    points: np.ndarray
    scan_index: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.size and not np.all(np.isfinite(pts)):
            raise FormatError(f"scan {self.scan_index} contains non-finite coordinates")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]


def read_scan(path, format: str = "kitti-bin", scan_index: int = 0) -> Scan:
    if format == "kitti-bin":
        return Scan(_read_kitti_bin(path), scan_index)
    if format == "ply-ascii":
        return Scan(read_ply(path)[0], scan_index)
    raise FormatError(f"unknown scan format {format!r} (expected one of {SCAN_FORMATS})")


def _read_kitti_bin(path) -> np.ndarray:
    try:
        n_bytes = Path(path).stat().st_size
        raw = np.fromfile(path, dtype="<f4")
    except OSError as exc:
        raise FormatError(f"cannot read scan {path}: {exc}") from exc
    if n_bytes % 16 != 0:
        raise FormatError(
            f"{path}: truncated kitti-bin record ({n_bytes} bytes is not a "
            "multiple of 16)"
        )
    return raw.reshape(-1, 4)[:, :3].astype(np.float64)


def write_scan(points: np.ndarray, path):
    """kitti-bin writer (intensity zeroed); used by the synthetic generator."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rec = np.zeros((pts.shape[0], 4), dtype="<f4")
    rec[:, :3] = pts.astype("<f4")
    rec.tofile(path)


def read_poses(path) -> list[Pose]:
    """One pose per line: 12 reals, row-major 3x4.  Rotations off
    orthonormal by more than 1e-3 are warned about; anything beyond the Pose
    tolerance is projected back onto SO(3)."""
    poses = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read poses {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 12:
            raise FormatError(
                f"{path}:{lineno}: expected 12 values per pose line, got {len(tokens)}"
            )
        try:
            mat = np.array([float(t) for t in tokens]).reshape(3, 4)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric pose entry") from exc
        rot = mat[:, :3]
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > 1e-3:
            log.warning(
                "%s:%d: rotation deviates from orthonormal by %.2e; re-orthonormalizing",
                path, lineno, err,
            )
            rot = nearest_rotation(rot)
        elif err > 1e-6:
            rot = nearest_rotation(rot)
        poses.append(Pose(rot, mat[:, 3]))
    return poses


def write_poses(poses, path):
    with open(path, "w") as fh:
        for pose in poses:
            mat = np.hstack([pose.rotation, pose.translation.reshape(3, 1)])
            fh.write(" ".join(f"{v:.17g}" for v in mat.ravel()) + "\n")


def write_labels(labels: np.ndarray, path):
    """One '<u4' per point: 251 dynamic, 9 static (SemanticKITTI-MOS style)."""
    lab = np.asarray(labels, dtype=bool)
    np.where(lab, np.uint32(DYNAMIC_LABEL), np.uint32(STATIC_LABEL)).astype(
        "<u4"
    ).tofile(path)


def read_labels(path) -> np.ndarray:
    """Boolean dynamic mask; any lower-16-bit class >= 251 counts as moving."""
    try:
        raw = np.fromfile(path, dtype="<u4")
    except OSError as exc:
        raise FormatError(f"cannot read labels {path}: {exc}") from exc
    return (raw & 0xFFFF) >= 251


def write_ply(points: np.ndarray, labels: np.ndarray, path):
    """Colored debug cloud: red = dynamic, green = static."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    lab = np.asarray(labels, dtype=bool)
    if pts.shape[0] != lab.shape[0]:
        raise FormatError("points/labels length mismatch in ply export")
    with open(path, "w") as fh:
        fh.write(
            "ply\nformat ascii 1.0\n"
            f"element vertex {pts.shape[0]}\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            "end_header\n"
        )
        for (x, y, z), dyn in zip(pts, lab):
            r, g = (255, 0) if dyn else (0, 255)
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} 0\n")


def read_ply(path):
    """Minimal ply-ascii vertex reader; returns (points, colors or None)."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read ply {path}: {exc}") from exc
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: missing ply magic")
    n_vertex = None
    properties: list[str] = []
    in_vertex = False
    body_at = None
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise FormatError(f"{path}: only ascii ply is supported")
        if tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            properties.append(tok[-1])
        elif tok[0] == "end_header":
            body_at = i + 1
            break
    if n_vertex is None or body_at is None:
        raise FormatError(f"{path}: no vertex element in header")
    for axis in ("x", "y", "z"):
        if axis not in properties:
            raise FormatError(f"{path}: vertex element lacks property {axis}")
    cols = [properties.index(a) for a in ("x", "y", "z")]
    rows = lines[body_at : body_at + n_vertex]
    if len(rows) < n_vertex:
        raise FormatError(f"{path}: expected {n_vertex} vertex rows, got {len(rows)}")
    try:
        data = np.array([[float(v) for v in row.split()] for row in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric vertex data") from exc
    points = data[:, cols] if data.size else np.empty((0, 3))
    colors = None
    if all(c in properties for c in ("red", "green", "blue")):
        ccols = [properties.index(c) for c in ("red", "green", "blue")]
        colors = data[:, ccols].astype(np.uint8) if data.size else None
    return points, colors
