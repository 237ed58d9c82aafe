"""Dynamic point identification.

Occupancy-change seeds from the map are spread over a Chebyshev
neighbourhood and a short scan window (the spatiotemporal convolution with a
uniform kernel), auto-thresholded with Otsu's method under a floor, merged
with a temporal retention map of recently dynamic voxels, dilated, and
finally mapped back onto scan points.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from . import _kernels
from .core import ChangeKind
from .integrate import VoxelizedScan
from .voxelmap import VoxelMap


def extract_changes(
    vscan: VoxelizedScan, vmap: VoxelMap, k: int, w_local: int
) -> np.ndarray:
    """Current-scan voxels that latched free -> occupied within the last
    w_local scans (the arriving-object seed set); returns (C, 3) keys."""
    if vscan.packed.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    found, kind, last_change = vmap.change_fields(vscan.packed)
    mask = found & (kind == ChangeKind.FREE_TO_OCCUPIED) & (k - last_change < w_local)
    return vscan.keys[mask]


def convolve_scores(
    vscan: VoxelizedScan,
    vmap: VoxelMap,
    k: int,
    kernel_size: int,
    w_local: int,
    backend=None,
) -> np.ndarray:
    """Dynamic evidence per current-scan voxel: the number of map voxels
    within Chebyshev radius (kernel_size-1)/2 whose latched occupancy changed
    (either direction) within the last w_local scans.  Uniform kernel."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd, got {kernel_size}")
    backend = backend if backend is not None else _kernels.active()
    seeds = vmap.changed_within(k, w_local)
    return backend.neighbor_counts(vscan.packed, seeds, (kernel_size - 1) // 2)


def otsu_threshold(scores: np.ndarray, otsu_min: int) -> int:
    """Between-class-variance threshold over integer scores, floored.

    Candidates t split scores into {< t} and {>= t}; the t maximizing
    w0*w1*(mu0-mu1)^2 wins, ties going to the lowest t.  Degenerate
    single-valued histograms return that value.  The result is never below
    otsu_min, and classification downstream uses score >= threshold.
    """
    s = np.asarray(scores)
    if s.size == 0:
        return int(otsu_min)
    if s.min() < 0:
        raise ValueError("scores must be non-negative")
    hist = np.bincount(s.astype(np.int64))
    if np.count_nonzero(hist) == 1:
        return max(int(s[0]), int(otsu_min))
    total = float(s.size)
    values = np.arange(hist.size, dtype=np.float64)
    csum = np.cumsum(hist).astype(np.float64)
    cmom = np.cumsum(hist * values)
    n0 = csum[:-1]  # counts with score < t, for t = 1..max
    n1 = total - n0
    sum0 = cmom[:-1]
    sum1 = cmom[-1] - sum0
    valid = (n0 > 0) & (n1 > 0)
    var_b = np.zeros(n0.shape[0])
    mu0 = np.divide(sum0, n0, out=np.zeros_like(sum0), where=valid)
    mu1 = np.divide(sum1, n1, out=np.zeros_like(sum1), where=valid)
    var_b[valid] = (
        (n0[valid] / total) * (n1[valid] / total) * (mu0[valid] - mu1[valid]) ** 2
    )
    t = int(np.argmax(var_b)) + 1  # argmax takes the first (lowest) tie
    return max(t, int(otsu_min))


class TemporalDynamicMap:
    """Retention buffer of high-confidence dynamic voxels (packed keys to
    the scan index of their last threshold-qualifying classification)."""

    def __init__(self):
        self._entries: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def contains(self, packed: np.ndarray) -> np.ndarray:
        entries = self._entries
        if not entries:
            return np.zeros(packed.shape[0], dtype=bool)
        return np.fromiter(
            (p in entries for p in packed.tolist()), dtype=bool, count=packed.shape[0]
        )

    def update(self, packed: np.ndarray, k: int):
        entries = self._entries
        for p in packed.tolist():
            entries[p] = k

    def evict(self, k: int, w_dynamic: int):
        horizon = k - w_dynamic
        self._entries = {p: t for p, t in self._entries.items() if t >= horizon}


def classify_dynamic(
    packed: np.ndarray,
    scores: np.ndarray,
    threshold: int,
    tdm: TemporalDynamicMap,
    k: int,
    w_dynamic: int,
) -> np.ndarray:
    """Dynamic mask over the current scan's voxels: score >= threshold, plus
    any voxel still held by the temporal map.  Entries older than
    k - w_dynamic are evicted before the preservation check (an entry aged
    exactly w_dynamic still preserves; one scan older does not), then
    threshold-qualifying voxels are recorded at scan k."""
    tdm.evict(k, w_dynamic)
    above = scores >= threshold
    dynamic = above | tdm.contains(packed)
    tdm.update(packed[above], k)
    return dynamic


def dilate(
    dynamic_packed: np.ndarray,
    candidate_packed: np.ndarray,
    radius: int,
    backend=None,
) -> np.ndarray:
    """Union of the dynamic set with every candidate within Chebyshev
    ``radius`` of a dynamic key; sorted packed keys.  Candidates are the
    current scan's voxels, so dilation never labels unobserved space."""
    backend = backend if backend is not None else _kernels.active()
    counts = backend.neighbor_counts(candidate_packed, dynamic_packed, radius)
    return np.union1d(dynamic_packed, candidate_packed[counts > 0])


def dilate_mask(
    dynamic_mask: np.ndarray,
    packed: np.ndarray,
    radius: int,
    backend=None,
) -> np.ndarray:
    """dilate() restricted to a mask over the (unique) current-scan keys."""
    backend = backend if backend is not None else _kernels.active()
    counts = backend.neighbor_counts(packed, packed[dynamic_mask], radius)
    return counts > 0


def label_points(vscan: VoxelizedScan, dynamic_mask: np.ndarray) -> np.ndarray:
    """Per-point labels: True (dynamic) iff the point's voxel is dynamic.
    Points dropped by the range filter stay static."""
    labels = np.zeros(vscan.n_points, dtype=bool)
    valid = vscan.point_to_key >= 0
    labels[valid] = dynamic_mask[vscan.point_to_key[valid]]
    return labels


def _member_of_sorted(values: np.ndarray, sorted_set: np.ndarray) -> np.ndarray:
    if sorted_set.size == 0 or values.size == 0:
        return np.zeros(values.shape[0], dtype=bool)
    pos = np.searchsorted(sorted_set, values)
    ok = pos < sorted_set.size
    out = np.zeros(values.shape[0], dtype=bool)
    out[ok] = sorted_set[pos[ok]] == values[ok]
    return out


class DelayedLabeler:
    """Lookahead re-labeling for delayed mode.

    Labels for scan j are emitted once scans j+1 .. j+w_local have been
    processed, additionally marking dynamic every point whose voxel appears
    in any of those scans' dynamic sets.  flush() emits the tail with
    whatever lookahead exists.
    """

    def __init__(self, w_local: int):
        if w_local < 1:
            raise ValueError("w_local must be >= 1")
        self._w = int(w_local)
        self._pending = deque()  # (scan_index, labels, per-point packed keys)
        self._dynamic = deque()  # sorted dynamic packed set per pending scan

    def push(self, scan_index: int, labels: np.ndarray, point_packed: np.ndarray,
             dynamic_packed: np.ndarray):
        """Returns a list of (scan_index, final labels) ready for emission."""
        self._pending.append((scan_index, labels.copy(), point_packed))
        self._dynamic.append(np.asarray(dynamic_packed, dtype=np.int64))
        if len(self._pending) > self._w:
            return [self._emit_oldest()]
        return []

    def flush(self):
        out = []
        while self._pending:
            out.append(self._emit_oldest())
        return out

    def _emit_oldest(self):
        scan_index, labels, point_packed = self._pending.popleft()
        self._dynamic.popleft()
        for future in self._dynamic:
            labels |= _member_of_sorted(point_packed, future)
        return scan_index, labels


def finalize_delayed(results, w_local: int):
    """One-shot delayed re-labeling of a whole sequence.

    ``results`` is an iterable of (scan_index, labels, point_packed,
    dynamic_packed) in scan order; returns the re-labeled vectors in the
    same order.
    """
    labeler = DelayedLabeler(w_local)
    out = []
    for scan_index, labels, point_packed, dynamic_packed in results:
        out.extend(labeler.push(scan_index, labels, point_packed, dynamic_packed))
    out.extend(labeler.flush())
    return out
