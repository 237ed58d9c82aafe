"""Numpy fallback implementations of the hot kernels.

The compiled extension (_native) mirrors these semantics exactly; float
results must be bit-identical between backends, so the HMM arithmetic is
written as explicit elementwise expressions (no matmul) with the same
association order as the C loops.
"""

from __future__ import annotations

import numpy as np

from ..core import KEY_BIAS, KEY_BITS, pack_keys, pack_offsets

_LIK_EPS = 1e-9

# Bounds the neighbour-expansion memory in neighbor_counts.
_CHUNK_ELEMS = 4_000_000


def raycast_line(start, end) -> np.ndarray:
    """3D Bresenham cell list from start to end, both included.

    Closed-form evaluation of the classic integer-error walk: one cell per
    step of the dominant axis (ties prefer x, then y), 26-connected.
    """
    s = np.asarray(start, dtype=np.int64).reshape(3)
    e = np.asarray(end, dtype=np.int64).reshape(3)
    d = e - s
    ad = np.abs(d)
    sg = np.sign(d)
    if ad[0] >= ad[1] and ad[0] >= ad[2]:
        drv = 0
    elif ad[1] >= ad[2]:
        drv = 1
    else:
        drv = 2
    n = int(ad[drv])
    out = np.empty((n + 1, 3), dtype=np.int64)
    if n == 0:
        out[0] = s
        return out
    t = np.arange(n + 1, dtype=np.int64)
    for ax in range(3):
        out[:, ax] = s[ax] + sg[ax] * ((2 * t * ad[ax] + ad[drv]) // (2 * ad[drv]))
    return out


def trace_rays(sensor_key, hit_keys, cap: int) -> np.ndarray:
    """Observed cells for one scan: union of Bresenham rays from the sensor
    cell to every hit cell, each truncated to ``cap`` steps, the sensor cell
    itself excluded.  Returns sorted unique packed keys."""
    s = np.asarray(sensor_key, dtype=np.int64).reshape(3)
    hits = np.asarray(hit_keys, dtype=np.int64).reshape(-1, 3)
    if hits.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    d = hits - s
    ad = np.abs(d)
    sg = np.sign(d)
    drv = np.where(
        (ad[:, 0] >= ad[:, 1]) & (ad[:, 0] >= ad[:, 2]),
        0,
        np.where(ad[:, 1] >= ad[:, 2], 1, 2),
    )
    ad_drv = ad[np.arange(hits.shape[0]), drv]
    n = np.minimum(ad_drv, int(cap))
    total = int(n.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ray = np.repeat(np.arange(hits.shape[0]), n)
    starts = np.concatenate(([0], np.cumsum(n)[:-1]))
    t = np.arange(total, dtype=np.int64) - np.repeat(starts, n) + 1
    den = 2 * ad_drv[ray]
    cells = np.empty((total, 3), dtype=np.int64)
    for ax in range(3):
        cells[:, ax] = s[ax] + sg[ray, ax] * ((2 * t * ad[ray, ax] + ad_drv[ray]) // den)
    return np.unique(pack_keys(cells))


def hmm_batch(belief, likelihood, latched, a, p_min, k, last_observed, last_change, change_kind):
    """One filter step over contiguous row arrays, in place.

    belief holds rows (unobserved, occupied, free); a is the 3x3
    column-stochastic transition matrix.  Updates latch state, change
    bookkeeping, and last_observed; returns the boolean mask of rows whose
    latched state changed this step.
    """
    x0 = belief[:, 0].copy()
    x1 = belief[:, 1].copy()
    x2 = belief[:, 2].copy()
    y1 = a[1, 0] * x0 + a[1, 1] * x1 + a[1, 2] * x2
    y2 = a[2, 0] * x0 + a[2, 1] * x1 + a[2, 2] * x2
    lik = np.asarray(likelihood, dtype=np.float64)
    z1 = lik * y1
    z2 = (1.0 - lik) * y2
    s = z1 + z2
    bad = s <= 0.0
    if bad.any():
        # Degenerate normalizer (likelihood exactly 0/1 against an opposing
        # belief vertex): clamp the likelihood and carry on.
        lb = np.clip(lik[bad], _LIK_EPS, 1.0 - _LIK_EPS)
        z1b = lb * y1[bad]
        z2b = (1.0 - lb) * y2[bad]
        z1[bad] = z1b
        z2[bad] = z2b
        s[bad] = z1b + z2b
    b1 = z1 / s
    b2 = z2 / s
    belief[:, 0] = 0.0
    belief[:, 1] = b1
    belief[:, 2] = b2

    old = latched.copy()
    to_occ = (b1 > p_min) & (old != 1)
    to_free = (b2 > p_min) & (old != 2) & ~to_occ
    new = np.where(to_occ, np.int8(1), np.where(to_free, np.int8(2), old)).astype(np.int8)
    changed = new != old
    change_kind[changed] = 0
    change_kind[changed & (old == 2) & (new == 1)] = 1
    change_kind[changed & (old == 1) & (new == 2)] = 2
    last_change[changed] = k
    latched[:] = new
    last_observed[:] = k
    return changed


def neighbor_counts(query_packed, seed_packed, radius: int) -> np.ndarray:
    """For each (unique) query key, the number of seed keys within Chebyshev
    distance ``radius`` (a seed equal to the query counts)."""
    q = np.asarray(query_packed, dtype=np.int64)
    seeds = np.asarray(seed_packed, dtype=np.int64)
    counts = np.zeros(q.shape[0], dtype=np.int32)
    if q.size == 0 or seeds.size == 0:
        return counts
    order = np.argsort(q, kind="stable")
    qs = q[order]
    offs = pack_offsets(radius)
    counts_sorted = np.zeros(q.size, dtype=np.int32)
    chunk = max(1, _CHUNK_ELEMS // offs.size)
    for i in range(0, seeds.size, chunk):
        neigh = (seeds[i : i + chunk, None] + offs[None, :]).ravel()
        pos = np.searchsorted(qs, neigh)
        ok = pos < qs.size
        idx = pos[ok]
        idx = idx[qs[idx] == neigh[ok]]
        np.add.at(counts_sorted, idx, 1)
    counts[order] = counts_sorted
    return counts


def edf_distances(query_keys, hit_keys, delta: float, truncation: float) -> np.ndarray:
    """Truncated Euclidean distance field over voxel keys.

    Distance is delta times the key-space distance to the nearest hit key,
    exact up to ``truncation`` and clamped to it beyond (also the value when
    there are no hits at all).
    """
    q = np.asarray(query_keys, dtype=np.int64).reshape(-1, 3)
    h = np.asarray(hit_keys, dtype=np.int64).reshape(-1, 3)
    if q.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    if h.shape[0] == 0:
        return np.full(q.shape[0], float(truncation))
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(h.astype(np.float64)).query(q.astype(np.float64), k=1)
    return np.minimum(float(delta) * dist, float(truncation))


class PackedIndex:
    """Packed voxel key -> row number, kept as parallel sorted arrays.

    Keys passed to any one call must be unique.  Row numbers are assigned by
    the caller via ``next_row`` and never reused until rebuild.
    """

    def __init__(self):
        self._keys = np.empty(0, dtype=np.int64)
        self._rows = np.empty(0, dtype=np.int64)

    def __len__(self):
        return int(self._keys.size)

    def lookup(self, keys) -> np.ndarray:
        q = np.asarray(keys, dtype=np.int64)
        rows = np.full(q.shape[0], -1, dtype=np.int64)
        if self._keys.size and q.size:
            pos = np.searchsorted(self._keys, q)
            ok = pos < self._keys.size
            found = np.zeros(q.shape[0], dtype=bool)
            found[ok] = self._keys[pos[ok]] == q[ok]
            rows[found] = self._rows[pos[found]]
        return rows

    def lookup_or_insert(self, keys, next_row: int):
        q = np.asarray(keys, dtype=np.int64)
        rows = self.lookup(q)
        missing = rows < 0
        n_new = int(missing.sum())
        if n_new:
            new_keys = q[missing]
            order = np.argsort(new_keys, kind="stable")
            rank = np.empty(n_new, dtype=np.int64)
            rank[order] = np.arange(n_new, dtype=np.int64)
            rows[missing] = next_row + rank
            sorted_new = new_keys[order]
            ins = np.searchsorted(self._keys, sorted_new)
            self._keys = np.insert(self._keys, ins, sorted_new)
            self._rows = np.insert(self._rows, ins, next_row + np.arange(n_new, dtype=np.int64))
        return rows, n_new

    def remove(self, keys):
        q = np.asarray(keys, dtype=np.int64)
        if not (self._keys.size and q.size):
            return
        pos = np.searchsorted(self._keys, q)
        ok = pos < self._keys.size
        hit = pos[ok][self._keys[pos[ok]] == q[ok]]
        if hit.size:
            keep = np.ones(self._keys.size, dtype=bool)
            keep[hit] = False
            self._keys = self._keys[keep]
            self._rows = self._rows[keep]

    def rebuild(self, keys):
        """Reset so that keys[i] maps to row i."""
        q = np.asarray(keys, dtype=np.int64)
        order = np.argsort(q, kind="stable")
        self._keys = q[order]
        self._rows = order.astype(np.int64)


# Unused here, kept so both backends expose identical packing constants for
# the equivalence tests.
_PACK_CONSTANTS = (KEY_BITS, KEY_BIAS)
