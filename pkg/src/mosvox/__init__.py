"""Learning-free moving-object segmentation for LiDAR point-cloud sequences.

Each voxel of a sparse map carries a three-state HMM belief (unobserved,
occupied, free) updated by a recursive filter from raycast observations;
latched occupancy changes are convolved over a spatiotemporal neighbourhood,
auto-thresholded, and mapped back to per-point static/dynamic labels.
"""

__version__ = "0.1.0"

from ._kernels import active_name as kernel_backend
from .config import Config, load_config
from .core import (
    ChangeKind,
    OccupancyState,
    Pose,
    TransitionModel,
    build_transition_model,
    voxelize_point,
)
from .evaluate import ConfusionCounts, accumulate, iou
from .pipeline import Pipeline, RunManifest, build_manifest, run
from .scan_io import Scan, read_labels, read_poses, read_scan, write_labels
from .synthetic import SceneSpec, generate, reference_scene
from .voxelmap import VoxelMap, VoxelRecord, hmm_update

__all__ = [
    "ChangeKind",
    "Config",
    "ConfusionCounts",
    "OccupancyState",
    "Pipeline",
    "Pose",
    "RunManifest",
    "Scan",
    "SceneSpec",
    "TransitionModel",
    "VoxelMap",
    "VoxelRecord",
    "accumulate",
    "build_manifest",
    "build_transition_model",
    "generate",
    "hmm_update",
    "iou",
    "kernel_backend",
    "load_config",
    "read_labels",
    "read_poses",
    "read_scan",
    "reference_scene",
    "run",
    "voxelize_point",
    "write_labels",
]
