import numpy as np
import pytest

from mosvox.core import ChangeKind, OccupancyState, pack_keys, unpack_keys, voxel_center
from mosvox.detect import (
    DelayedLabeler,
    TemporalDynamicMap,
    classify_dynamic,
    convolve_scores,
    dilate,
    dilate_mask,
    extract_changes,
    label_points,
    otsu_threshold,
)
from mosvox.integrate import build_voxelized_scan
from mosvox.voxelmap import VoxelMap, VoxelRecord

from oracles import chebyshev_counts, dilate_bruteforce, otsu_bruteforce


def _vscan(keys, delta=0.25, origin=(0.05, 0.05, 0.05)):
    pts = np.array([voxel_center(k, delta) for k in keys]).reshape(-1, 3)
    return build_voxelized_scan(pts, origin, delta)


def _map_with(entries, delta=0.25):
    """entries: list of (key, latched, last_change, kind)."""
    vmap = VoxelMap(delta)
    for key, latched, last_change, kind in entries:
        vmap.store(
            key,
            VoxelRecord(
                belief=np.array([0.0, 1.0, 0.0]),
                latched_state=latched,
                last_observed=max(last_change or 0, 0),
                last_change=last_change,
                change_kind=kind,
            ),
        )
    return vmap


OCC = OccupancyState.OCCUPIED
F2O = ChangeKind.FREE_TO_OCCUPIED
O2F = ChangeKind.OCCUPIED_TO_FREE


class TestExtractChanges:
    def test_static_room_empty(self):
        vmap = _map_with([((0, 0, 0), OCC, None, ChangeKind.NONE)])
        vscan = _vscan([(0, 0, 0)])
        assert extract_changes(vscan, vmap, k=10, w_local=3).shape[0] == 0

    def test_fresh_change_included(self):
        vmap = _map_with([((0, 0, 0), OCC, 10, F2O)])
        vscan = _vscan([(0, 0, 0)])
        got = extract_changes(vscan, vmap, k=10, w_local=3)
        assert [tuple(k) for k in got] == [(0, 0, 0)]

    def test_stale_change_excluded(self):
        vmap = _map_with([((0, 0, 0), OCC, 5, F2O)])
        vscan = _vscan([(0, 0, 0)])
        assert extract_changes(vscan, vmap, k=10, w_local=3).shape[0] == 0

    def test_only_free_to_occupied_seeds(self):
        vmap = _map_with(
            [((0, 0, 0), OCC, 10, F2O), ((1, 0, 0), OccupancyState.FREE, 10, O2F)]
        )
        vscan = _vscan([(0, 0, 0), (1, 0, 0)])
        got = extract_changes(vscan, vmap, k=10, w_local=3)
        assert [tuple(k) for k in got] == [(0, 0, 0)]

    def test_window_boundary(self):
        # k - last_change < w_local is strict
        vmap = _map_with([((0, 0, 0), OCC, 7, F2O)])
        vscan = _vscan([(0, 0, 0)])
        assert extract_changes(vscan, vmap, k=10, w_local=3).shape[0] == 0
        assert extract_changes(vscan, vmap, k=9, w_local=3).shape[0] == 1


class TestConvolveScores:
    def test_no_changes_all_zero(self, backend):
        vmap = _map_with([((0, 0, 0), OCC, None, ChangeKind.NONE)])
        vscan = _vscan([(0, 0, 0), (3, 3, 3)])
        scores = convolve_scores(vscan, vmap, k=5, kernel_size=5, w_local=3, backend=backend)
        np.testing.assert_array_equal(scores, [0, 0])

    def test_unit_impulse(self, backend):
        # one changed voxel scores itself and every cell within radius 2
        center = (4, 4, 4)
        vmap = _map_with([(center, OCC, 5, F2O)])
        keys = [center, (6, 4, 4), (2, 2, 2), (7, 4, 4), (4, 6, 6)]
        vscan = _vscan(keys)
        scores = convolve_scores(vscan, vmap, k=5, kernel_size=5, w_local=3, backend=backend)
        by_key = dict(zip((tuple(k) for k in vscan.keys), scores))
        assert by_key[(4, 4, 4)] == 1
        assert by_key[(6, 4, 4)] == 1
        assert by_key[(2, 2, 2)] == 1
        assert by_key[(4, 6, 6)] == 1
        assert by_key[(7, 4, 4)] == 0  # Chebyshev distance 3

    def test_counts_both_change_directions(self, backend):
        vmap = _map_with([((0, 0, 0), OCC, 5, F2O), ((1, 0, 0), OccupancyState.FREE, 5, O2F)])
        vscan = _vscan([(0, 0, 0)])
        scores = convolve_scores(vscan, vmap, k=5, kernel_size=5, w_local=3, backend=backend)
        assert scores[0] == 2

    def test_matches_bruteforce_random(self, backend):
        rng = np.random.default_rng(51)
        for _ in range(30):
            scan_keys = np.unique(rng.integers(-10, 10, size=(150, 3)), axis=0)
            changed = np.unique(rng.integers(-10, 10, size=(30, 3)), axis=0)
            k, w_local = 20, int(rng.integers(1, 5))
            ages = rng.integers(0, 2 * w_local, size=changed.shape[0])
            kinds = rng.choice([F2O, O2F], size=changed.shape[0])
            entries = [
                (tuple(c), OCC, k - int(age), kind)
                for c, age, kind in zip(changed, ages, kinds)
            ]
            vmap = _map_with(entries)
            vscan = _vscan(scan_keys)
            m = int(rng.choice([3, 5, 7]))
            got = convolve_scores(vscan, vmap, k=k, kernel_size=m, w_local=w_local, backend=backend)
            recent = changed[ages < w_local]
            expected = chebyshev_counts(vscan.keys, recent, (m - 1) // 2)
            np.testing.assert_array_equal(got, expected)

    def test_score_bounded_by_kernel_volume(self, backend):
        rng = np.random.default_rng(53)
        changed = np.unique(rng.integers(-3, 3, size=(200, 3)), axis=0)
        entries = [(tuple(c), OCC, 5, F2O) for c in changed]
        vmap = _map_with(entries)
        vscan = _vscan([(0, 0, 0)])
        m = 5
        scores = convolve_scores(vscan, vmap, k=5, kernel_size=m, w_local=3, backend=backend)
        assert scores[0] <= m**3

    def test_window_monotonicity(self, backend):
        # enlarging w_local never shrinks any score
        rng = np.random.default_rng(57)
        changed = np.unique(rng.integers(-6, 6, size=(40, 3)), axis=0)
        ages = rng.integers(0, 8, size=changed.shape[0])
        k = 30
        entries = [(tuple(c), OCC, k - int(a), F2O) for c, a in zip(changed, ages)]
        vmap = _map_with(entries)
        vscan = _vscan(np.unique(rng.integers(-6, 6, size=(80, 3)), axis=0))
        prev = None
        for w in (1, 2, 4, 8):
            scores = convolve_scores(vscan, vmap, k=k, kernel_size=5, w_local=w, backend=backend)
            if prev is not None:
                assert (scores >= prev).all()
            prev = scores


class TestOtsu:
    def test_bimodal_with_floor(self):
        scores = np.array([0] * 90 + [10] * 10)
        oracle = otsu_bruteforce(scores, otsu_min=0)
        assert 0 < oracle <= 10
        assert otsu_threshold(scores, otsu_min=0) == oracle
        assert otsu_threshold(scores, otsu_min=3) == max(oracle, 3)

    def test_all_zeros_floor(self):
        assert otsu_threshold(np.zeros(100, dtype=int), otsu_min=3) == 3

    def test_single_distinct_value(self):
        assert otsu_threshold(np.full(10, 7), otsu_min=3) == 7

    def test_empty_scores(self):
        assert otsu_threshold(np.zeros(0, dtype=int), otsu_min=3) == 3

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(61)
        for _ in range(120):
            n = int(rng.integers(1, 500))
            if rng.random() < 0.5:
                scores = rng.integers(0, 64, size=n)
            else:
                # zero-heavy mixture as produced by real scans
                scores = np.concatenate(
                    [np.zeros(n, dtype=int), rng.integers(1, 64, size=max(1, n // 10))]
                )
            otsu_min = int(rng.integers(0, 6))
            assert otsu_threshold(scores, otsu_min) == otsu_bruteforce(scores, otsu_min)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            otsu_threshold(np.array([-1, 3]), 3)


class TestClassifyAndTdm:
    def test_below_threshold_empty(self):
        tdm = TemporalDynamicMap()
        packed = pack_keys(np.array([[0, 0, 0], [1, 0, 0]]))
        got = classify_dynamic(packed, np.array([1, 2]), 3, tdm, k=0, w_dynamic=100)
        assert not got.any()
        assert len(tdm) == 0

    def test_threshold_inclusive(self):
        tdm = TemporalDynamicMap()
        packed = pack_keys(np.array([[0, 0, 0], [1, 0, 0]]))
        got = classify_dynamic(packed, np.array([3, 2]), 3, tdm, k=0, w_dynamic=100)
        np.testing.assert_array_equal(got, [True, False])
        assert len(tdm) == 1

    def test_preservation_across_scans(self):
        tdm = TemporalDynamicMap()
        packed = pack_keys(np.array([[5, 5, 5]]))
        classify_dynamic(packed, np.array([10]), 3, tdm, k=0, w_dynamic=100)
        # re-observed later with a low score: still dynamic via the tdm
        got = classify_dynamic(packed, np.array([0]), 3, tdm, k=1, w_dynamic=100)
        assert got[0]

    def test_eviction_after_window(self):
        tdm = TemporalDynamicMap()
        packed = pack_keys(np.array([[5, 5, 5]]))
        classify_dynamic(packed, np.array([10]), 3, tdm, k=0, w_dynamic=100)
        got = classify_dynamic(packed, np.array([0]), 3, tdm, k=100, w_dynamic=100)
        assert got[0]  # aged exactly w_dynamic: still preserved
        got = classify_dynamic(packed, np.array([0]), 3, tdm, k=101, w_dynamic=100)
        assert not got[0]  # aged w_dynamic + 1: evicted
        assert len(tdm) == 0

    def test_preserved_entries_do_not_refresh(self):
        tdm = TemporalDynamicMap()
        packed = pack_keys(np.array([[5, 5, 5]]))
        classify_dynamic(packed, np.array([10]), 3, tdm, k=0, w_dynamic=10)
        for k in range(1, 12):
            got = classify_dynamic(packed, np.array([0]), 3, tdm, k=k, w_dynamic=10)
        assert not got[0]  # preservation alone cannot extend retention


class TestDilate:
    def test_radius_zero_identity(self, backend):
        dyn = pack_keys(np.array([[0, 0, 0]]))
        cand = pack_keys(np.array([[0, 0, 0], [1, 0, 0]]))
        got = dilate(dyn, cand, radius=0, backend=backend)
        np.testing.assert_array_equal(got, dyn)

    def test_full_cube(self, backend):
        dyn = pack_keys(np.array([[0, 0, 0]]))
        d = np.arange(-1, 2)
        cube = np.stack(np.meshgrid(d, d, d, indexing="ij"), axis=-1).reshape(-1, 3)
        cand = pack_keys(cube)
        got = dilate(dyn, np.sort(cand), radius=1, backend=backend)
        assert got.shape[0] == 27

    def test_matches_bruteforce(self, backend):
        rng = np.random.default_rng(71)
        for _ in range(20):
            dyn_keys = np.unique(rng.integers(-6, 6, size=(10, 3)), axis=0)
            cand_keys = np.unique(rng.integers(-6, 6, size=(80, 3)), axis=0)
            radius = int(rng.integers(0, 3))
            got = dilate(
                np.sort(pack_keys(dyn_keys)), np.sort(pack_keys(cand_keys)), radius, backend
            )
            expected = dilate_bruteforce(dyn_keys, cand_keys, radius)
            assert {tuple(k) for k in unpack_keys(got)} == expected

    def test_monotone_and_extensive(self, backend):
        rng = np.random.default_rng(73)
        dyn = np.sort(pack_keys(np.unique(rng.integers(-5, 5, size=(8, 3)), axis=0)))
        cand = np.sort(pack_keys(np.unique(rng.integers(-5, 5, size=(60, 3)), axis=0)))
        prev = set(dilate(dyn, cand, 0, backend))
        assert set(dyn).issubset(prev)
        for radius in (1, 2, 3):
            cur = set(dilate(dyn, cand, radius, backend))
            assert prev.issubset(cur)
            prev = cur

    def test_mask_variant_consistent(self, backend):
        rng = np.random.default_rng(74)
        cand_keys = np.unique(rng.integers(-5, 5, size=(50, 3)), axis=0)
        packed = np.sort(pack_keys(cand_keys))
        dyn_mask = rng.random(packed.shape[0]) < 0.2
        mask = dilate_mask(dyn_mask, packed, 1, backend)
        full = dilate(packed[dyn_mask], packed, 1, backend)
        np.testing.assert_array_equal(np.sort(packed[mask]), full)


class TestLabelPoints:
    def test_empty_dynamic_all_static(self):
        vscan = _vscan([(0, 0, 0), (1, 1, 1)])
        labels = label_points(vscan, np.zeros(2, dtype=bool))
        assert not labels.any()

    def test_all_dynamic(self):
        vscan = _vscan([(0, 0, 0), (1, 1, 1)])
        labels = label_points(vscan, np.ones(2, dtype=bool))
        assert labels.all()

    def test_shared_voxel(self):
        pts = np.array([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [1.1, 0.1, 0.1]])
        vscan = build_voxelized_scan(pts, (0.0, 0.0, 0.0), 0.25)
        dyn = vscan.keys[:, 0] == 0  # the voxel holding the first two points
        labels = label_points(vscan, dyn)
        np.testing.assert_array_equal(labels, [True, True, False])

    def test_dropped_points_stay_static(self):
        pts = np.array([[0.1, 0.0, 0.0], [1.1, 0.0, 0.0]])
        keep = np.array([False, True])
        vscan = build_voxelized_scan(pts, (0.0, 0.0, 0.0), 0.25, keep)
        labels = label_points(vscan, np.ones(vscan.keys.shape[0], dtype=bool))
        np.testing.assert_array_equal(labels, [False, True])


class TestDelayed:
    def _push(self, labeler, k, labels, keys, dynamic):
        return labeler.push(
            k,
            np.asarray(labels, dtype=bool),
            pack_keys(np.asarray(keys)),
            np.sort(pack_keys(np.asarray(dynamic))) if len(dynamic) else np.empty(0, np.int64),
        )

    def test_no_future_detections_identical(self):
        labeler = DelayedLabeler(3)
        out = []
        for k in range(5):
            out += self._push(labeler, k, [False, False], [(k, 0, 0), (k, 1, 0)], [])
        out += labeler.flush()
        assert [idx for idx, _ in out] == [0, 1, 2, 3, 4]
        assert not any(lab.any() for _, lab in out)

    def test_future_detection_relabels(self):
        # voxel detected dynamic only at j+2 within w_local=3 marks scan j
        labeler = DelayedLabeler(3)
        key = (7, 7, 7)
        out = self._push(labeler, 0, [False], [key], [])
        out += self._push(labeler, 1, [False], [key], [])
        out += self._push(labeler, 2, [True], [key], [key])
        out += self._push(labeler, 3, [True], [key], [key])
        assert [idx for idx, _ in out] == [0]
        assert out[0][1][0]  # scan 0 point re-labeled dynamic
        out = labeler.flush()
        assert [idx for idx, _ in out] == [1, 2, 3]
        assert all(lab[0] for _, lab in out)

    def test_lookahead_window_is_exclusive_of_older(self):
        # detection at j+4 with w_local=3 must NOT relabel scan j
        labeler = DelayedLabeler(3)
        key = (1, 2, 3)
        emitted = {}
        plan = [[], [], [], [], [key]]
        for k, dyn in enumerate(plan):
            for idx, lab in self._push(labeler, k, [bool(dyn)], [key], dyn):
                emitted[idx] = lab
        for idx, lab in labeler.flush():
            emitted[idx] = lab
        assert not emitted[0][0]
        assert emitted[1][0]  # j=1 sees the detection at j+3... within (1, 4]
        assert emitted[4][0]

    def test_tail_flush_uses_partial_lookahead(self):
        labeler = DelayedLabeler(3)
        key = (0, 0, 0)
        out = self._push(labeler, 0, [False], [key], [])
        out += self._push(labeler, 1, [True], [key], [key])
        assert out == []
        flushed = labeler.flush()
        assert [idx for idx, _ in flushed] == [0, 1]
        assert flushed[0][1][0]  # scan 0 picked up the scan-1 detection

    def test_online_equivalence_oracle(self):
        # emitted labels equal the direct set-union rule over (j, j+w]
        rng = np.random.default_rng(81)
        w = 3
        n_scans, n_pts = 12, 40
        keys = rng.integers(-5, 5, size=(n_scans, n_pts, 3))
        online = rng.random((n_scans, n_pts)) < 0.2
        dynamic_sets = []
        for k in range(n_scans):
            dyn_keys = keys[k][online[k]]
            dynamic_sets.append(np.sort(np.unique(pack_keys(dyn_keys))) if dyn_keys.size else np.empty(0, np.int64))
        labeler = DelayedLabeler(w)
        emitted = {}
        for k in range(n_scans):
            for idx, lab in labeler.push(k, online[k], pack_keys(keys[k]), dynamic_sets[k]):
                emitted[idx] = lab
        for idx, lab in labeler.flush():
            emitted[idx] = lab
        for j in range(n_scans):
            future = set()
            for f in range(j + 1, min(j + w, n_scans - 1) + 1):
                future |= set(dynamic_sets[f].tolist())
            expected = online[j] | np.array(
                [int(p) in future for p in pack_keys(keys[j])]
            )
            np.testing.assert_array_equal(emitted[j], expected)
