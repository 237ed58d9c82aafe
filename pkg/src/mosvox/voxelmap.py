"""Sparse persistent voxel map.

Per-voxel state lives in parallel (columnar) arrays addressed through a
packed-key index supplied by the kernel backend: a belief vector over
(unobserved, occupied, free), the latched discrete state, and the scan
indices of the last observation and last latched-state change.  Rows are
tombstoned on prune and compacted once enough garbage accumulates, so the
observable map (via the index) always satisfies the retention invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import (
    ChangeKind,
    OccupancyState,
    TransitionModel,
    pack_keys,
    unpack_keys,
)

_LIK_EPS = 1e-9
_MIN_CAPACITY = 1024
_COMPACT_FLOOR = 4096


@dataclass
class VoxelRecord:
    """Belief state of one voxel; belief is ordered (unobserved, occupied, free)."""

    belief: np.ndarray
    latched_state: OccupancyState = OccupancyState.UNOBSERVED
    last_observed: int = 0
    last_change: int | None = None
    change_kind: ChangeKind = ChangeKind.NONE


def fresh_record(k: int) -> VoxelRecord:
    return VoxelRecord(belief=np.array([1.0, 0.0, 0.0]), last_observed=k)


def hmm_update(
    record: VoxelRecord,
    occupancy_likelihood: float,
    model: TransitionModel,
    p_min: float,
    k: int,
) -> VoxelRecord:
    """One recursive filter step for a single voxel.

    Computes normalize(B @ A @ belief) with B = diag(0, L, 1-L), then latches
    a new discrete state when its posterior strictly exceeds p_min.  The
    arithmetic mirrors the batched kernels term for term so that single and
    batched updates agree bit-exactly.

    A zero normalizer can only arise from a likelihood of exactly 0 or 1
    against an opposing degenerate belief; the likelihood is then clamped to
    [1e-9, 1 - 1e-9] rather than aborting mid-sequence.
    """
    lik = float(occupancy_likelihood)
    if not 0.0 <= lik <= 1.0:
        raise ValueError(f"occupancy likelihood must lie in [0, 1], got {lik}")
    a = model.matrix
    x0, x1, x2 = record.belief
    y1 = a[1, 0] * x0 + a[1, 1] * x1 + a[1, 2] * x2
    y2 = a[2, 0] * x0 + a[2, 1] * x1 + a[2, 2] * x2
    z1 = lik * y1
    z2 = (1.0 - lik) * y2
    s = z1 + z2
    if s <= 0.0:
        lik = min(max(lik, _LIK_EPS), 1.0 - _LIK_EPS)
        z1 = lik * y1
        z2 = (1.0 - lik) * y2
        s = z1 + z2
    b1 = z1 / s
    b2 = z2 / s

    old = record.latched_state
    if b1 > p_min and old != OccupancyState.OCCUPIED:
        new = OccupancyState.OCCUPIED
    elif b2 > p_min and old != OccupancyState.FREE:
        new = OccupancyState.FREE
    else:
        new = old
    if new != old:
        if old == OccupancyState.FREE and new == OccupancyState.OCCUPIED:
            kind = ChangeKind.FREE_TO_OCCUPIED
        elif old == OccupancyState.OCCUPIED and new == OccupancyState.FREE:
            kind = ChangeKind.OCCUPIED_TO_FREE
        else:
            kind = ChangeKind.NONE
        last_change = k
    else:
        kind = record.change_kind
        last_change = record.last_change
    return VoxelRecord(
        belief=np.array([0.0, b1, b2]),
        latched_state=new,
        last_observed=k,
        last_change=last_change,
        change_kind=kind,
    )


class VoxelMap:
    """Sparse map from voxel keys to HMM belief records."""

    def __init__(self, delta: float, backend=None):
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.delta = float(delta)
        self._backend = backend if backend is not None else _kernels.active()
        self._index = self._backend.PackedIndex()
        self._n = 0
        self._garbage = 0
        self._allocate(_MIN_CAPACITY)

    def _allocate(self, capacity: int):
        self._belief = np.empty((capacity, 3), dtype=np.float64)
        self._latched = np.empty(capacity, dtype=np.int8)
        self._last_observed = np.empty(capacity, dtype=np.int64)
        self._last_change = np.empty(capacity, dtype=np.int64)
        self._change_kind = np.empty(capacity, dtype=np.int8)
        self._keys = np.empty((capacity, 3), dtype=np.int64)
        self._packed = np.empty(capacity, dtype=np.int64)
        self._alive = np.zeros(capacity, dtype=bool)

    def _ensure(self, needed: int):
        cap = self._belief.shape[0]
        if needed <= cap:
            return
        new_cap = cap
        while new_cap < needed:
            new_cap *= 2
        for name in (
            "_belief",
            "_latched",
            "_last_observed",
            "_last_change",
            "_change_kind",
            "_keys",
            "_packed",
            "_alive",
        ):
            old = getattr(self, name)
            shape = (new_cap,) + old.shape[1:]
            grown = np.zeros(shape, dtype=old.dtype)
            grown[: old.shape[0]] = old
            setattr(self, name, grown)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, key) -> bool:
        packed = np.atleast_1d(pack_keys(np.asarray(key, dtype=np.int64)))
        return bool(self._index.lookup(packed)[0] >= 0)

    def _init_rows(self, lo: int, hi: int, k: int):
        self._belief[lo:hi] = (1.0, 0.0, 0.0)
        self._latched[lo:hi] = OccupancyState.UNOBSERVED
        self._last_observed[lo:hi] = k
        self._last_change[lo:hi] = -1
        self._change_kind[lo:hi] = ChangeKind.NONE
        self._alive[lo:hi] = True

    def _record_at(self, row: int) -> VoxelRecord:
        lc = int(self._last_change[row])
        return VoxelRecord(
            belief=self._belief[row].copy(),
            latched_state=OccupancyState(int(self._latched[row])),
            last_observed=int(self._last_observed[row]),
            last_change=None if lc < 0 else lc,
            change_kind=ChangeKind(int(self._change_kind[row])),
        )

    def record(self, key) -> VoxelRecord | None:
        packed = np.atleast_1d(pack_keys(np.asarray(key, dtype=np.int64)))
        row = int(self._index.lookup(packed)[0])
        return None if row < 0 else self._record_at(row)

    def get_or_insert(self, key, k: int) -> VoxelRecord:
        """Existing record, or a freshly inserted unobserved one."""
        key = np.asarray(key, dtype=np.int64).reshape(3)
        packed = np.atleast_1d(pack_keys(key))
        rows, n_new = self._index.lookup_or_insert(packed, self._n)
        row = int(rows[0])
        if n_new:
            self._ensure(self._n + 1)
            self._init_rows(self._n, self._n + 1, k)
            self._keys[row] = key
            self._packed[row] = packed[0]
            self._n += 1
        return self._record_at(row)

    def store(self, key, record: VoxelRecord):
        """Write a record back (single-voxel path for record-level updates)."""
        key = np.asarray(key, dtype=np.int64).reshape(3)
        packed = np.atleast_1d(pack_keys(key))
        rows, n_new = self._index.lookup_or_insert(packed, self._n)
        row = int(rows[0])
        if n_new:
            self._ensure(self._n + 1)
            self._init_rows(self._n, self._n + 1, record.last_observed)
            self._keys[row] = key
            self._packed[row] = packed[0]
            self._n += 1
        self._belief[row] = record.belief
        self._latched[row] = record.latched_state
        self._last_observed[row] = record.last_observed
        self._last_change[row] = -1 if record.last_change is None else record.last_change
        self._change_kind[row] = record.change_kind

    def observe_batch(
        self,
        packed: np.ndarray,
        keys: np.ndarray,
        likelihood: np.ndarray,
        model: TransitionModel,
        p_min: float,
        k: int,
    ) -> np.ndarray:
        """Filter-update every observed voxel once; returns the packed keys
        whose latched state changed.  ``packed`` must be unique."""
        rows, n_new = self._index.lookup_or_insert(packed, self._n)
        if n_new:
            self._ensure(self._n + n_new)
            self._init_rows(self._n, self._n + n_new, k)
            self._n += n_new
        self._keys[rows] = keys
        self._packed[rows] = packed

        belief = np.ascontiguousarray(self._belief[rows])
        latched = np.ascontiguousarray(self._latched[rows])
        last_observed = np.ascontiguousarray(self._last_observed[rows])
        last_change = np.ascontiguousarray(self._last_change[rows])
        change_kind = np.ascontiguousarray(self._change_kind[rows])
        lik = np.ascontiguousarray(likelihood, dtype=np.float64)
        a = np.ascontiguousarray(model.matrix)

        changed = self._backend.hmm_batch(
            belief, lik, latched, a, float(p_min), int(k),
            last_observed, last_change, change_kind,
        )

        self._belief[rows] = belief
        self._latched[rows] = latched
        self._last_observed[rows] = last_observed
        self._last_change[rows] = last_change
        self._change_kind[rows] = change_kind
        return packed[changed]

    def prune(self, current: int, sensor_origin, r_max: float, w_global: int) -> int:
        """Drop cells unobserved for w_global scans or centred beyond r_max
        of the sensor; returns the number removed."""
        n = self._n
        if n == 0:
            return 0
        origin = np.asarray(sensor_origin, dtype=np.float64).reshape(3)
        centers = (self._keys[:n] + 0.5) * self.delta
        d2 = ((centers - origin) ** 2).sum(axis=1)
        dead = self._alive[:n] & (
            (self._last_observed[:n] < current - w_global) | (d2 > r_max * r_max)
        )
        removed = int(dead.sum())
        if removed:
            self._index.remove(self._packed[:n][dead])
            self._alive[:n][dead] = False
            self._garbage += removed
        if self._garbage > max(_COMPACT_FLOOR, len(self._index) // 4):
            self._compact()
        return removed

    def _compact(self):
        keep = self._alive[: self._n]
        m = int(keep.sum())
        self._belief[:m] = self._belief[: self._n][keep]
        self._latched[:m] = self._latched[: self._n][keep]
        self._last_observed[:m] = self._last_observed[: self._n][keep]
        self._last_change[:m] = self._last_change[: self._n][keep]
        self._change_kind[:m] = self._change_kind[: self._n][keep]
        self._keys[:m] = self._keys[: self._n][keep]
        self._packed[:m] = self._packed[: self._n][keep]
        self._alive[:m] = True
        self._alive[m : self._n] = False
        self._n = m
        self._garbage = 0
        self._index.rebuild(self._packed[:m].copy())

    def rows_for(self, packed: np.ndarray) -> np.ndarray:
        return self._index.lookup(packed)

    def change_fields(self, packed: np.ndarray):
        """(found, change_kind, last_change) for each packed key; missing
        keys report kind NONE and last_change -1."""
        rows = self._index.lookup(packed)
        found = rows >= 0
        kind = np.zeros(packed.shape[0], dtype=np.int8)
        last_change = np.full(packed.shape[0], -1, dtype=np.int64)
        if found.any():
            r = rows[found]
            kind[found] = self._change_kind[r]
            last_change[found] = self._last_change[r]
        return found, kind, last_change

    def changed_within(self, k: int, w_local: int) -> np.ndarray:
        """Packed keys of live cells with an occupancy change newer than
        w_local scans (either direction)."""
        n = self._n
        if n == 0:
            return np.empty(0, dtype=np.int64)
        mask = (
            self._alive[:n]
            & (self._change_kind[:n] != ChangeKind.NONE)
            & (k - self._last_change[:n] < w_local)
        )
        return self._packed[:n][mask]

    def live_packed(self) -> np.ndarray:
        """Sorted packed keys of all live cells."""
        return np.sort(self._packed[: self._n][self._alive[: self._n]])

    def snapshot_lines(self) -> list[str]:
        """Debug dump: 'ix iy iz p_unobs p_occ p_free latched last_observed'."""
        order = np.argsort(self._packed[: self._n], kind="stable")
        lines = []
        for row in order:
            if not self._alive[row]:
                continue
            kx, ky, kz = self._keys[row]
            b = self._belief[row]
            lines.append(
                f"{kx} {ky} {kz} {b[0]:.9g} {b[1]:.9g} {b[2]:.9g} "
                f"{OccupancyState(int(self._latched[row])).name.lower()} "
                f"{int(self._last_observed[row])}"
            )
        return lines

    def write_snapshot(self, path):
        with open(path, "w") as fh:
            fh.write("\n".join(self.snapshot_lines()))
            fh.write("\n")

    def records(self):
        """Iterate (key, VoxelRecord) over live cells (debug/test helper)."""
        for row in range(self._n):
            if self._alive[row]:
                yield self._keys[row].copy(), self._record_at(row)
