import numpy as np
import pytest

from mosvox.core import (
    KEY_LIMIT,
    Pose,
    TransitionModel,
    build_transition_model,
    nearest_rotation,
    pack_keys,
    pack_offsets,
    unpack_keys,
    voxel_center,
    voxelize_point,
    voxelize_points,
)
from mosvox.errors import ConfigError

from oracles import transition_matrix


class TestVoxelize:
    def test_origin(self):
        assert tuple(voxelize_point((0.0, 0.0, 0.0), 0.25)) == (0, 0, 0)

    def test_floor_semantics_negative(self):
        assert tuple(voxelize_point((0.5, -0.1, 0.0), 0.25)) == (2, -1, 0)

    def test_half_open_boundary(self):
        assert tuple(voxelize_point((0.2499, 0.25, 0.0), 0.25)) == (0, 1, 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            voxelize_point((np.nan, 0.0, 0.0), 0.25)
        with pytest.raises(ValueError):
            voxelize_points(np.array([[0.0, np.inf, 0.0]]), 0.25)

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            voxelize_point((0.0, 0.0, 0.0), 0.0)

    def test_requantization_idempotent(self):
        rng = np.random.default_rng(11)
        for delta in (0.1, 0.25, 1.0, 3.7):
            keys = rng.integers(-2000, 2000, size=(500, 3))
            centers = (keys + 0.5) * delta
            requant = voxelize_points(centers, delta)
            np.testing.assert_array_equal(requant, keys)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-50, 50, size=(200, 3))
        batch = voxelize_points(pts, 0.25)
        for p, k in zip(pts, batch):
            np.testing.assert_array_equal(voxelize_point(p, 0.25), k)


class TestPacking:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        keys = rng.integers(-100_000, 100_000, size=(1000, 3))
        np.testing.assert_array_equal(unpack_keys(pack_keys(keys)), keys)

    def test_scalar_round_trip(self):
        key = np.array([-17, 3, 522])
        np.testing.assert_array_equal(unpack_keys(pack_keys(key)), key)

    def test_packing_is_order_preserving_per_axis(self):
        a = pack_keys(np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0]]))
        assert list(a) == sorted(a)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            pack_keys(np.array([[KEY_LIMIT, 0, 0]]))

    def test_offset_identity(self):
        # pack(k + d) == pack(k) + packed_offset, for signed offsets
        rng = np.random.default_rng(3)
        keys = rng.integers(-500, 500, size=(50, 3))
        offs = pack_offsets(2)
        d = np.arange(-2, 3, dtype=np.int64)
        dx, dy, dz = np.meshgrid(d, d, d, indexing="ij")
        deltas = np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1)
        packed = pack_keys(keys)
        for i, delta in enumerate(deltas):
            np.testing.assert_array_equal(pack_keys(keys + delta), packed + offs[i])


class TestVoxelCenter:
    def test_center(self):
        np.testing.assert_allclose(voxel_center((0, -1, 2), 0.5), [0.25, -0.25, 1.25])


class TestTransitionModel:
    def test_columns_at_099(self):
        model = build_transition_model(0.99)
        a = model.matrix
        np.testing.assert_allclose(a[:, 1], [0.0, 0.99, 0.01])
        np.testing.assert_allclose(a[:, 2], [0.0, 0.01, 0.99])
        np.testing.assert_allclose(a[:, 0], [0.99, 0.005, 0.005])

    def test_columns_at_05(self):
        a = build_transition_model(0.5).matrix
        np.testing.assert_allclose(a[:, 1], [0.0, 0.5, 0.5])

    def test_degenerate_limit_is_identity(self):
        eps = 1e-12
        a = build_transition_model(1.0 - eps).matrix
        np.testing.assert_allclose(a, np.eye(3), atol=2e-12)

    def test_matches_reference_construction(self):
        for s in (0.5, 0.9, 0.99, 0.999):
            np.testing.assert_array_equal(
                build_transition_model(s).matrix, transition_matrix(s)
            )

    def test_columns_sum_to_one_exactly(self):
        for s in np.linspace(0.01, 0.99, 23):
            a = build_transition_model(s).matrix
            assert np.abs(a.sum(axis=0) - 1.0).max() < 1e-12

    def test_no_transition_back_to_unobserved(self):
        a = build_transition_model(0.7).matrix
        assert a[0, 1] == 0.0 and a[0, 2] == 0.0

    def test_out_of_range_rejected(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ConfigError):
                build_transition_model(bad)

    def test_invalid_matrix_rejected(self):
        with pytest.raises(ValueError):
            TransitionModel(np.full((3, 3), 0.5))


class TestPose:
    def test_identity_apply(self):
        pts = np.array([[1.0, 2.0, 3.0], [-4.0, 0.0, 2.0]])
        np.testing.assert_array_equal(Pose.identity().apply(pts), pts)

    def test_translation(self):
        pose = Pose(np.eye(3), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(pose.apply(np.zeros((1, 3))), [[1.0, 2.0, 3.0]])

    def test_yaw_rotation(self):
        c, s = np.cos(np.pi / 2), np.sin(np.pi / 2)
        pose = Pose(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]), np.zeros(3))
        np.testing.assert_allclose(
            pose.apply(np.array([[1.0, 0.0, 0.0]])), [[0.0, 1.0, 0.0]], atol=1e-6
        )

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 1.01, np.zeros(3))
        with pytest.raises(ValueError):
            Pose(-np.eye(3), np.zeros(3))  # det = -1

    def test_compose_matches_sequential_apply(self):
        rng = np.random.default_rng(4)
        from scipy.spatial.transform import Rotation

        a = Pose(Rotation.random(random_state=1).as_matrix(), rng.normal(size=3))
        b = Pose(Rotation.random(random_state=2).as_matrix(), rng.normal(size=3))
        pts = rng.normal(size=(10, 3))
        np.testing.assert_allclose(
            a.compose(b).apply(pts), a.apply(b.apply(pts)), atol=1e-12
        )

    def test_orthonormality_over_1e6_compositions(self):
        # bulk composition as a tree reduction of one million random
        # rotations; the product must still be a rotation within 1e-6
        from scipy.spatial.transform import Rotation

        mats = Rotation.random(1_000_000, random_state=42).as_matrix()
        while mats.shape[0] > 1:
            if mats.shape[0] % 2:
                tail = mats[-1:]
                mats = np.concatenate([np.matmul(mats[:-1:2], mats[1:-1:2]), tail])
            else:
                mats = np.matmul(mats[::2], mats[1::2])
        product = mats[0]
        assert np.abs(product.T @ product - np.eye(3)).max() < 1e-6
        Pose(product, np.zeros(3))  # constructor revalidates at the same tolerance

    def test_orthonormality_over_sequential_compose_chain(self):
        from scipy.spatial.transform import Rotation

        rots = Rotation.random(10_000, random_state=9).as_matrix()
        pose = Pose.identity()
        for r in rots:
            pose = pose.compose(Pose(r, np.zeros(3)))
        assert np.abs(pose.rotation.T @ pose.rotation - np.eye(3)).max() < 1e-6


class TestNearestRotation:
    def test_projects_back_to_so3(self):
        rng = np.random.default_rng(8)
        from scipy.spatial.transform import Rotation

        r = Rotation.random(random_state=3).as_matrix()
        noisy = r + rng.normal(scale=1e-4, size=(3, 3))
        fixed = nearest_rotation(noisy)
        assert np.abs(fixed.T @ fixed - np.eye(3)).max() < 1e-12
        assert np.abs(fixed - r).max() < 1e-3
