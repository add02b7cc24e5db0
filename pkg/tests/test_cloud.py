import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudseg.cloud import (
    Aabb,
    PointCloud,
    RigidTransform,
    apply_transform,
    compose,
    crop,
    invert,
)


def random_transform(rng) -> RigidTransform:
    a = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # unique QR
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return RigidTransform(q, rng.normal(size=3))


def random_cloud(rng, n=100, labels=False) -> PointCloud:
    lab = rng.integers(0, 2, size=n) if labels else None
    return PointCloud(rng.normal(size=(n, 3)), rng.random((n, 3)), lab)


class TestPointCloud:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 3)), np.zeros((2, 3)))

    def test_color_range_enforced(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((1, 3)), np.array([[1.2, 0, 0]]))

    def test_nonfinite_positions_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[np.nan, 0, 0]]), np.zeros((1, 3)))

    def test_labels_validated(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((2, 3)), np.zeros((2, 3)), [0, 2])

    def test_empty_cloud_allowed(self):
        cloud = PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
        assert len(cloud) == 0

    def test_arrays_are_immutable(self):
        cloud = PointCloud(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            cloud.positions[0, 0] = 1.0


class TestRigidTransform:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        reflection = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidTransform(reflection, np.zeros(3))

    def test_identity_leaves_cloud_unchanged(self, rng):
        cloud = random_cloud(rng)
        out = apply_transform(cloud, RigidTransform.identity())
        np.testing.assert_array_equal(out.positions, cloud.positions)
        np.testing.assert_array_equal(out.colors, cloud.colors)

    def test_quarter_turn_about_z(self):
        quarter = RigidTransform(
            np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), np.zeros(3)
        )
        cloud = PointCloud(np.array([[1.0, 0.0, 0.0]]), np.zeros((1, 3)))
        out = apply_transform(cloud, quarter)
        np.testing.assert_allclose(out.positions, [[0.0, 1.0, 0.0]], atol=1e-15)

    def test_apply_then_invert_restores(self, rng):
        cloud = random_cloud(rng)
        t = random_transform(rng)
        out = apply_transform(apply_transform(cloud, t), invert(t))
        np.testing.assert_allclose(out.positions, cloud.positions, atol=1e-9)

    def test_compose_identity_is_noop(self, rng):
        t = random_transform(rng)
        c = compose(RigidTransform.identity(), t)
        np.testing.assert_allclose(c.rotation, t.rotation, atol=1e-15)
        np.testing.assert_allclose(c.translation, t.translation, atol=1e-15)

    def test_invert_identity(self):
        inv = invert(RigidTransform.identity())
        np.testing.assert_allclose(inv.rotation, np.eye(3))
        np.testing.assert_allclose(inv.translation, np.zeros(3))

    def test_compose_t_with_inverse_is_identity_100_random(self, rng):
        for _ in range(100):
            t = random_transform(rng)
            c = compose(t, invert(t))
            assert np.abs(c.rotation - np.eye(3)).max() < 1e-9
            assert np.abs(c.translation).max() < 1e-9

    def test_compose_means_apply_b_then_a(self, rng):
        a, b = random_transform(rng), random_transform(rng)
        points = rng.normal(size=(10, 3))
        via_compose = compose(a, b).apply_points(points)
        sequential = a.apply_points(b.apply_points(points))
        np.testing.assert_allclose(via_compose, sequential, atol=1e-12)

    def test_rigidity_preserves_pairwise_distances(self, rng):
        cloud = random_cloud(rng, n=40)
        t = random_transform(rng)
        out = apply_transform(cloud, t)
        d_before = np.linalg.norm(cloud.positions[:, None] - cloud.positions[None], axis=-1)
        d_after = np.linalg.norm(out.positions[:, None] - out.positions[None], axis=-1)
        np.testing.assert_allclose(d_after, d_before, atol=1e-9)


class TestCrop:
    def test_box_containing_all_points(self, rng):
        cloud = random_cloud(rng, labels=True)
        box = Aabb(cloud.positions.min(0), cloud.positions.max(0))
        out = crop(cloud, box)
        assert len(out) == len(cloud)
        np.testing.assert_array_equal(out.labels, cloud.labels)

    def test_disjoint_box_empties_cloud(self, rng):
        cloud = random_cloud(rng)
        box = Aabb(np.array([100.0, 100.0, 100.0]), np.array([101.0, 101.0, 101.0]))
        assert len(crop(cloud, box)) == 0

    def test_unit_cube_corners_half_box(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
        cloud = PointCloud(corners, np.zeros((8, 3)))
        out = crop(cloud, Aabb(np.zeros(3), np.full(3, 0.5)))
        # hand enumeration: only the origin corner lies in [0, 0.5]^3
        assert len(out) == 1
        np.testing.assert_array_equal(out.positions, [[0.0, 0.0, 0.0]])

    def test_boundary_points_retained(self):
        cloud = PointCloud(np.array([[0.5, 0.5, 0.5]]), np.zeros((1, 3)))
        out = crop(cloud, Aabb(np.zeros(3), np.full(3, 0.5)))
        assert len(out) == 1

    def test_crop_idempotent(self, rng):
        cloud = random_cloud(rng, n=200, labels=True)
        box = Aabb(np.full(3, -0.5), np.full(3, 0.5))
        once = crop(cloud, box)
        twice = crop(once, box)
        np.testing.assert_array_equal(once.positions, twice.positions)
        np.testing.assert_array_equal(once.labels, twice.labels)

    def test_invalid_box_rejected(self):
        with pytest.raises(ValueError):
            Aabb(np.ones(3), np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_rigidity_property(seed):
    rng = np.random.default_rng(seed)
    cloud = random_cloud(rng, n=12)
    t = random_transform(rng)
    out = apply_transform(cloud, t)
    i, j = rng.integers(0, 12, size=2)
    before = np.linalg.norm(cloud.positions[i] - cloud.positions[j])
    after = np.linalg.norm(out.positions[i] - out.positions[j])
    assert abs(before - after) < 1e-9
