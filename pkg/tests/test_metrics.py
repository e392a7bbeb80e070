"""Plausibility metrics and clustering-based diversity measures."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scene_placer.body.model import PoseVector, pose_body
from scene_placer.fixtures import box_mesh, cylinder_mesh
from scene_placer.geometry.mesh import TriangleMesh
from scene_placer.geometry.sdf import sdf_query_many
from scene_placer.metrics import (
    body_interior,
    cluster_size_metric,
    contact_metric,
    entropy_metric,
    kmeans,
    kmeans_objective,
    non_collision,
    volume_non_collision,
)


class TestNonCollision:
    def test_free_space(self, room_scene, capsule_body):
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [0.0, -1.2, 0.3]))
        assert non_collision(room_scene, posed.mesh) == 1.0

    def test_below_floor(self, room_scene):
        mesh = box_mesh((0.0, -1.0, -0.05), (0.3, 0.3, 0.04))
        assert non_collision(room_scene, mesh) == 0.0

    def test_half_submerged(self, room_scene, capsule_body):
        # Straddle the floor slab; the slab is 0.1 m thick, so vertices
        # either above its top or below its bottom sit in free space.
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [0.0, -1.2, -0.9]))
        nc = non_collision(room_scene, posed.mesh)
        z = posed.vertices[:, 2]
        expected = ((z > 0) | (z < -0.1)).mean()
        assert nc == pytest.approx(expected, abs=0.02)
        assert 0.3 < (z <= 0).mean() < 0.7  # construction sanity: about half dipped

    def test_partition_identity(self, room_scene, capsule_body, rng):
        posed = pose_body(capsule_body, PoseVector(rng.normal(0, 0.2, 63), 0.0,
                                                   [0.0, -1.2, -0.4]))
        values = sdf_query_many(room_scene.require_sdf(), posed.vertices)
        nc = non_collision(room_scene, posed.mesh)
        assert nc + (values <= 0).mean() == pytest.approx(1.0, abs=1e-12)


class TestVolumeNonCollision:
    def test_free_space(self, room_scene, capsule_body):
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [0.0, -1.2, 0.3]))
        assert volume_non_collision(
            room_scene, body_interior(capsule_body, posed)
        ) == 1.0

    def test_fully_submerged(self, room_scene, rng):
        points = rng.uniform([-1, -1, -0.095], [1, 1, -0.03], size=(500, 3))
        assert volume_non_collision(room_scene, points) == 0.0

    def test_limb_through_wall_vnc_below_nc(self, wall_scene):
        # The classic blind spot: few vertices penetrate a thin wall while
        # real interior volume does. The limb pierces along the wall normal.
        limb = cylinder_mesh((0.0, -0.4, 0.6), (0.0, 0.4, 0.6), 0.05,
                             segments=16, rings=16)
        nc = non_collision(wall_scene, limb)
        rng = np.random.default_rng(0)
        t = rng.uniform(0, 1, (3000, 1))
        axis = np.array([[0.0, 0.8, 0.0]])
        radial = rng.normal(size=(3000, 3))
        radial[:, 1] = 0
        radial /= np.linalg.norm(radial, axis=1, keepdims=True)
        interior = (
            np.array([0, -0.4, 0.6])
            + t * axis
            + radial * rng.uniform(0, 0.045, (3000, 1))
        )
        vnc = volume_non_collision(wall_scene, interior)
        assert nc > 0.9
        assert vnc < nc


class TestContactMetric:
    def test_floating(self, room_scene, capsule_body):
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [0.0, -1.2, 0.5]))
        assert contact_metric(room_scene, posed.mesh) == 0

    def test_toe_below_floor(self, room_scene, capsule_body):
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [0.0, -1.2, 0.0]))
        t_z = -posed.vertices[:, 2].min() - 0.001  # lowest vertex 1 mm under
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [0.0, -1.2, t_z]))
        assert contact_metric(room_scene, posed.mesh) == 1

    def test_matches_min_sdf_oracle(self, room_scene, capsule_body, rng):
        for dz in rng.uniform(-0.01, 0.01, 6):
            posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                       [0.0, -1.2, 0.04 + dz]))
            values = sdf_query_many(room_scene.require_sdf(), posed.vertices)
            assert contact_metric(room_scene, posed.mesh) == int(values.min() < 0)


class TestKmeans:
    def test_single_cluster_is_mean(self, rng):
        pts = rng.normal(size=(40, 5))
        assignments, centers = kmeans(pts, k=1, seed=0)
        assert set(assignments) == {0}
        np.testing.assert_allclose(centers[0], pts.mean(axis=0), atol=1e-12)

    def test_k_equals_n(self, rng):
        pts = rng.normal(size=(12, 3)) * 10
        assignments, centers = kmeans(pts, k=12, seed=0)
        assert len(set(assignments.tolist())) == 12
        assert kmeans_objective(pts, assignments, centers) == pytest.approx(0.0)

    def test_two_blobs_recovered(self, rng):
        a = rng.normal(0, 0.1, size=(60, 4)) + 5
        b = rng.normal(0, 0.1, size=(60, 4)) - 5
        pts = np.vstack([a, b])
        truth = np.array([0] * 60 + [1] * 60)
        assignments, _ = kmeans(pts, k=2, seed=3)
        agree = max(
            (assignments == truth).mean(), (assignments == 1 - truth).mean()
        )
        assert agree == 1.0

    def test_objective_monotone_over_iterations(self, rng):
        pts = rng.normal(size=(100, 6))
        previous = np.inf
        # Identical seeding makes each capped run a prefix of the trajectory.
        for iters in range(1, 12):
            assignments, centers = kmeans(pts, k=7, seed=5,
                                          max_iterations=iters)
            objective = kmeans_objective(pts, assignments, centers)
            assert objective <= previous + 1e-9
            previous = objective

    def test_fewer_points_than_clusters(self, rng):
        with pytest.raises(ValueError, match="smaller k"):
            kmeans(rng.normal(size=(10, 3)), k=50)

    def test_deterministic(self, rng):
        pts = rng.normal(size=(80, 4))
        a1, c1 = kmeans(pts, k=5, seed=9)
        a2, c2 = kmeans(pts, k=5, seed=9)
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(c1, c2)


class TestEntropyMetric:
    def test_uniform_fifty(self):
        assignments = np.repeat(np.arange(50), 4)
        assert entropy_metric(assignments, 50) == pytest.approx(
            np.log(50), abs=1e-9
        )

    def test_single_cluster(self):
        assert entropy_metric(np.zeros(100, dtype=int), 50) == 0.0

    def test_half_quarter_quarter(self):
        assignments = np.array([0] * 2 + [1] * 1 + [2] * 1)
        assert entropy_metric(assignments, 3) == pytest.approx(
            1.5 * np.log(2), abs=1e-12
        )

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_invariant_under_relabeling(self, seed):
        r = np.random.default_rng(seed)
        assignments = r.integers(0, 8, size=60)
        perm = r.permutation(8)
        assert entropy_metric(perm[assignments], 8) == pytest.approx(
            entropy_metric(assignments, 8), abs=1e-12
        )


class TestClusterSizeMetric:
    def test_points_at_centers(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0]])
        centers = pts.copy()
        assert cluster_size_metric(pts, np.array([0, 1]), centers) == 0.0

    def test_symmetric_pair(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0]])
        centers = np.array([[0.0, 0.0]])
        assert cluster_size_metric(pts, np.array([0, 0]), centers) == 1.0

    def test_matches_double_loop(self, rng):
        pts = rng.normal(size=(50, 4))
        assignments, centers = kmeans(pts, k=4, seed=1)
        expected = []
        for c in range(4):
            members = [i for i in range(50) if assignments[i] == c]
            if members:
                expected.append(
                    np.mean([np.linalg.norm(pts[i] - centers[c]) for i in members])
                )
        assert cluster_size_metric(pts, assignments, centers) == pytest.approx(
            np.mean(expected), abs=1e-9
        )
