"""Candidate grids, feasibility tests, and the placement pipeline."""

import numpy as np
import pytest

from scene_placer.body.model import PoseVector, pose_body
from scene_placer.fixtures import box_mesh, cylinder_mesh, merge_labeled, single_box_scene
from scene_placer.generators.corpus import sample_pose, _support_vertices
from scene_placer.geometry.mesh import TriangleMesh
from scene_placer.placement import (
    FeasibilityConfig,
    PlacementCandidate,
    STATUS_FEASIBLE,
    STATUS_PENDING,
    contact_test,
    generate_candidates,
    init_height,
    penetration_test,
    run_pipeline,
)
from scene_placer.scene import Scene, query_objects
from scene_placer.fixtures import _CAT


# Coarser grid and a capped optimizer keep full-pipeline tests fast while
# exercising the same code paths as the defaults.
FAST_CFG = FeasibilityConfig(grid_spacing=0.16)


def _fast_weights():
    from scene_placer.optimizer import EnergyWeights
    return EnergyWeights(max_iters=120)


class TestFeasibilityConfig:
    def test_defaults_valid(self):
        cfg = FeasibilityConfig()
        assert cfg.grid_spacing == 0.1 and cfg.min_contact_count == 20

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            FeasibilityConfig(grid_spacing=0.0)
        with pytest.raises(ValueError):
            FeasibilityConfig(contact_prob_threshold=1.5)


class TestGenerateCandidates:
    def test_unit_footprint_grid(self):
        scene = single_box_scene("table", size=(1.0, 1.0, 0.7))
        obj = query_objects(scene, "table")[0]
        cands = generate_candidates(obj, FeasibilityConfig(grid_spacing=0.5))
        assert len(cands) == 9 * 4

    def test_degenerate_footprint_center(self):
        obj = query_objects(single_box_scene("table", (0.04, 0.04, 0.5)),
                            "table")[0]
        cands = generate_candidates(obj, FeasibilityConfig(grid_spacing=0.5))
        assert len(cands) == 4
        for c in cands:
            np.testing.assert_allclose(c.grid_xy, [0.0, 0.0], atol=1e-9)

    def test_count_matches_closed_form(self, room_scene):
        chair = query_objects(room_scene, "chair")[0]
        cfg = FeasibilityConfig(grid_spacing=0.1)
        extent = chair.aabb.extent
        expected = (
            (int(np.floor(extent[0] / 0.1 + 1e-9)) + 1)
            * (int(np.floor(extent[1] / 0.1 + 1e-9)) + 1)
            * 4
        )
        assert len(generate_candidates(chair, cfg)) == expected

    def test_order_x_major_then_y_then_yaw(self):
        scene = single_box_scene("table", size=(1.0, 1.0, 0.7))
        obj = query_objects(scene, "table")[0]
        cands = generate_candidates(obj, FeasibilityConfig(grid_spacing=0.5))
        yaws = [c.yaw for c in cands[:4]]
        np.testing.assert_allclose(yaws, [0, np.pi / 2, np.pi, 3 * np.pi / 2])
        assert cands[0].grid_xy[1] < cands[4].grid_xy[1]  # y advances second
        assert cands[0].grid_xy[0] < cands[12].grid_xy[0]  # x advances last
        assert [c.index for c in cands] == list(range(len(cands)))


@pytest.fixture(scope="module")
def table_scene():
    scene = single_box_scene("table", size=(1.2, 1.2, 0.7))
    scene.build_sdf()
    return scene


class TestInitHeight:
    def test_standing_soles_rest_on_top(self, table_scene, capsule_body):
        obj = query_objects(table_scene, "table")[0]
        theta = np.zeros(63)
        contact = np.zeros(capsule_body.vertex_count)
        soles = _support_vertices(capsule_body, (7, 8, 10, 11))
        contact[soles] = 0.9
        cand = PlacementCandidate(0, obj.instance_id, np.array([0.0, 0.0]), 0.0)
        cfg = FeasibilityConfig()
        init_height(table_scene, obj, cand, capsule_body, theta, contact, cfg)
        assert cand.status == STATUS_PENDING
        posed = pose_body(capsule_body, cand.pose)
        assert posed.vertices[contact > 0.5, 2].min() == pytest.approx(
            0.705, abs=1e-6
        )

    def test_ray_miss_rejected(self, capsule_body):
        # Two boxes sharing an instance leave a gap under the footprint center.
        mesh = merge_labeled([
            (box_mesh((-0.6, 0, 0.35), (0.4, 0.4, 0.7)), _CAT["table"], 1),
            (box_mesh((0.6, 0, 0.35), (0.4, 0.4, 0.7)), _CAT["table"], 1),
            (box_mesh((0, 0, -0.05), (3, 3, 0.1)), _CAT["floor"], 0),
        ])
        scene = Scene(mesh)
        obj = query_objects(scene, "table")[0]
        cand = PlacementCandidate(0, obj.instance_id, np.array([0.0, 0.0]), 0.0)
        contact = np.ones(capsule_body.vertex_count)
        init_height(scene, obj, cand, capsule_body, np.zeros(63), contact,
                    FeasibilityConfig())
        assert cand.status == "rejected_contact"
        assert cand.reason == "no_support_hit"

    def test_sitting_on_chair_seat(self, room_scene, capsule_body):
        chair = query_objects(room_scene, "chair")[0]
        rng = np.random.default_rng(3)
        theta = sample_pose("sit", rng, jitter=0.0)
        contact = np.zeros(capsule_body.vertex_count)
        seat_region = _support_vertices(capsule_body, (0, 1, 2))
        contact[seat_region] = 0.9
        cand = PlacementCandidate(0, chair.instance_id,
                                  np.array([1.0, 0.0]), -np.pi / 2 % (2 * np.pi))
        cfg = FeasibilityConfig()
        init_height(room_scene, chair, cand, capsule_body, theta, contact, cfg)
        assert cand.status == STATUS_PENDING
        posed = pose_body(capsule_body, cand.pose)
        # Seat-region vertices rest on the seat surface plus clearance.
        assert posed.vertices[contact > 0.5, 2].min() == pytest.approx(
            0.45 + cfg.clearance, abs=1e-6
        )

    def test_occlusion_check_rejects_shadowed_floor(self, room_scene, capsule_body):
        floor = query_objects(room_scene, "floor")[0]
        # Directly under the table top.
        cand = PlacementCandidate(0, floor.instance_id,
                                  np.array([-1.0, 0.5]), 0.0)
        contact = np.ones(capsule_body.vertex_count)
        init_height(room_scene, floor, cand, capsule_body, np.zeros(63),
                    contact, FeasibilityConfig(), occlusion_check=True)
        assert cand.status == "rejected_contact"
        assert cand.reason == "occluded"


def _limb_through_wall_mesh():
    """Horizontal cylinder piercing the thin wall along its normal."""
    return cylinder_mesh((0.0, -0.4, 0.6), (0.0, 0.4, 0.6), 0.05, segments=12,
                         rings=16)


class TestPenetrationTest:
    def test_free_space_single_component(self, room_scene, capsule_body):
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [0.0, -1.2, 0.2]))
        passed, count, diag = penetration_test(room_scene, posed.mesh)
        assert passed and count == 1
        assert not diag["fully_submerged"]

    def test_limb_through_thin_wall_fails(self, wall_scene):
        passed, count, diag = penetration_test(wall_scene, _limb_through_wall_mesh())
        assert not passed
        assert count >= 2
        assert diag["mixed_face_count"] > 0

    def test_fully_submerged_passes_flagged(self, room_scene, capsule_body):
        mesh = box_mesh((0.0, 0.0, -0.05), (0.2, 0.2, 0.02))
        passed, count, diag = penetration_test(room_scene, mesh)
        assert passed and count == 0
        assert diag["fully_submerged"]

    def test_grazing_contact_passes(self, room_scene, capsule_body):
        rng = np.random.default_rng(3)
        theta = sample_pose("stand", rng, jitter=0.2)
        local = pose_body(capsule_body, PoseVector(theta, 0.0, np.zeros(3)))
        t_z = -local.vertices[:, 2].min() - 0.002  # soles dip 2 mm in
        posed = pose_body(capsule_body, PoseVector(theta, 0.0, [0.0, -1.2, t_z]))
        passed, count, _ = penetration_test(room_scene, posed.mesh)
        assert passed and count == 1

    def test_matches_bfs_component_oracle(self, wall_scene, rng):
        """Randomized bodies vs an independent BFS count on the sign graph."""
        from scene_placer.geometry.sdf import sdf_query_many

        for trial in range(50):
            # Random blobby test mesh: icosphere squashed and placed randomly.
            from scene_placer.fixtures import icosphere

            sphere = icosphere(
                rng.uniform(0.08, 0.3), subdivisions=1,
            )
            offset = rng.uniform([-0.7, -0.4, 0.1], [0.7, 0.4, 1.0])
            scale = rng.uniform([1.0, 0.2, 0.5], [3.0, 1.0, 1.5])
            mesh = TriangleMesh(sphere.vertices * scale + offset, sphere.faces)
            _, count, _ = penetration_test(wall_scene, mesh)

            values = sdf_query_many(wall_scene.require_sdf(), mesh.vertices)
            positive = values > 0
            adj = {i: [] for i in range(mesh.vertex_count)}
            for a, b, c in mesh.faces:
                if positive[a] and positive[b] and positive[c]:
                    for u, v in ((a, b), (b, c), (a, c)):
                        adj[int(u)].append(int(v))
                        adj[int(v)].append(int(u))
            seen = set()
            oracle = 0
            for start in np.flatnonzero(positive):
                if int(start) in seen:
                    continue
                oracle += 1
                stack = [int(start)]
                while stack:
                    node = stack.pop()
                    if node in seen:
                        continue
                    seen.add(node)
                    stack.extend(n for n in adj[node] if positive[n])
            assert count == oracle


class TestContactTest:
    def test_floating_body_fails_with_zero(self, room_scene, capsule_body):
        chair = query_objects(room_scene, "chair")[0]
        # Half a meter of air between the body and the chair's highest part.
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [1.0, 0.0, 1.5]))
        contact = np.ones(capsule_body.vertex_count)
        passed, count = contact_test(room_scene, chair, posed.mesh, contact,
                                     FeasibilityConfig())
        assert not passed and count == 0

    def test_resting_body_passes(self, room_scene, capsule_body):
        floor = query_objects(room_scene, "floor")[0]
        theta = np.zeros(63)
        local = pose_body(capsule_body, PoseVector(theta, 0.0, np.zeros(3)))
        t_z = -local.vertices[:, 2].min() + 0.002
        posed = pose_body(capsule_body, PoseVector(theta, 0.0, [0.0, -1.2, t_z]))
        contact = np.zeros(capsule_body.vertex_count)
        contact[_support_vertices(capsule_body, (7, 8, 10, 11))] = 0.9
        cfg = FeasibilityConfig()
        passed, count = contact_test(room_scene, floor, posed.mesh, contact, cfg)
        assert passed and count >= cfg.min_contact_count
        # Independent count: brute-force distances to the floor's triangles.
        from scene_placer.geometry.distance import closest_point_on_triangles

        high = posed.vertices[contact > cfg.contact_prob_threshold]
        tri = room_scene.mesh.triangles(floor.face_indices)
        cp, _ = closest_point_on_triangles(
            high[:, None, :], tri[None, :, 0], tri[None, :, 1], tri[None, :, 2]
        )
        d = np.linalg.norm(cp - high[:, None, :], axis=2).min(axis=1)
        assert count == int((d < cfg.contact_dist_threshold).sum())

    def test_zero_min_count_always_passes(self, room_scene, capsule_body):
        chair = query_objects(room_scene, "chair")[0]
        posed = pose_body(capsule_body, PoseVector(np.zeros(63), 0.0,
                                                   [1.0, 0.0, 2.0]))
        cfg = FeasibilityConfig(min_contact_count=0)
        passed, count = contact_test(
            room_scene, chair, posed.mesh,
            np.ones(capsule_body.vertex_count), cfg,
        )
        assert passed and count == 0

    def test_verdict_monotone_in_min_count(self, room_scene, capsule_body):
        floor = query_objects(room_scene, "floor")[0]
        theta = np.zeros(63)
        local = pose_body(capsule_body, PoseVector(theta, 0.0, np.zeros(3)))
        t_z = -local.vertices[:, 2].min() + 0.002
        posed = pose_body(capsule_body, PoseVector(theta, 0.0, [0.0, -1.2, t_z]))
        contact = np.zeros(capsule_body.vertex_count)
        contact[_support_vertices(capsule_body, (7, 8, 10, 11))] = 0.9
        previous = True
        for threshold in (0, 5, 20, 50, 200, 1000):
            cfg = FeasibilityConfig(min_contact_count=threshold)
            passed, _ = contact_test(room_scene, floor, posed.mesh, contact, cfg)
            assert previous or not passed  # once failing, stays failing
            previous = passed


class TestRunPipeline:
    def test_sit_on_chair_yields_passing_placements(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        result = run_pipeline(
            room_scene, "sit", "chair", capsule_body, trained_pose,
            trained_contact, seed=42, cfg=FAST_CFG, weights=_fast_weights(), jobs=2,
        )
        assert result.feasible_count >= 1
        for p in result.placements:
            posed = pose_body(capsule_body, p["pose"])
            ok, _, _ = penetration_test(room_scene, posed.mesh)
            assert ok
            chair = [o for o in room_scene.objects
                     if o.instance_id == p["instance_id"]][0]
            ok, count = contact_test(room_scene, chair, posed.mesh,
                                     result.contact, FAST_CFG)
            assert ok and count >= 20

    def test_candidate_enumeration_exhaustive(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        result = run_pipeline(
            room_scene, "sit", "chair", capsule_body, trained_pose,
            trained_contact, seed=42, cfg=FAST_CFG, weights=_fast_weights(), jobs=2,
        )
        chair = query_objects(room_scene, "chair")[0]
        expected = len(generate_candidates(chair, FAST_CFG))
        assert len(result.candidates) == expected
        assert [c.index for c in result.candidates] == list(range(expected))
        assert all(c.status != STATUS_PENDING for c in result.candidates)
        assert sum(result.tallies.values()) == expected

    def test_lie_on_chair_mostly_rejected(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        result = run_pipeline(
            room_scene, "lie", "chair", capsule_body, trained_pose,
            trained_contact, seed=7, cfg=FAST_CFG, weights=_fast_weights(), jobs=2,
        )
        rejected = (result.tallies["rejected_contact"]
                    + result.tallies["rejected_penetration"])
        assert rejected > result.tallies[STATUS_FEASIBLE]

    def test_unknown_category_no_placement(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        result = run_pipeline(
            room_scene, "sit", "sofa", capsule_body, trained_pose,
            trained_contact, seed=1, cfg=FAST_CFG, weights=_fast_weights(), jobs=2,
        )
        assert result.feasible_count == 0
        assert sum(result.tallies.values()) == 0

    def test_unknown_action_rejected(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        with pytest.raises(ValueError, match="stand, sit, lie"):
            run_pipeline(room_scene, "jump", "chair", capsule_body,
                         trained_pose, trained_contact)

    def test_no_pft_superset_reaches_optimization(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        with_pft = run_pipeline(
            room_scene, "sit", "chair", capsule_body, trained_pose,
            trained_contact, seed=42, enable_pft=True, cfg=FAST_CFG, weights=_fast_weights(), jobs=2,
        )
        without = run_pipeline(
            room_scene, "sit", "chair", capsule_body, trained_pose,
            trained_contact, seed=42, enable_pft=False, cfg=FAST_CFG, weights=_fast_weights(), jobs=2,
        )

        def optimized_set(result):
            return {
                c.index for c in result.candidates
                if "optimizer_iterations" in c.diagnostics
            }

        assert optimized_set(with_pft) <= optimized_set(without)

    def test_deterministic_under_seed(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        import json

        a = run_pipeline(room_scene, "sit", "chair", capsule_body,
                         trained_pose, trained_contact, seed=9, cfg=FAST_CFG, weights=_fast_weights())
        b = run_pipeline(room_scene, "sit", "chair", capsule_body,
                         trained_pose, trained_contact, seed=9, cfg=FAST_CFG, weights=_fast_weights())
        assert json.dumps(a.report_dict(), sort_keys=True) == json.dumps(
            b.report_dict(), sort_keys=True
        )

    def test_jobs_parallel_matches_sequential(
        self, room_scene, capsule_body, trained_pose, trained_contact
    ):
        import json

        seq = run_pipeline(room_scene, "sit", "chair", capsule_body,
                           trained_pose, trained_contact, seed=3, jobs=1, cfg=FAST_CFG, weights=_fast_weights())
        par = run_pipeline(room_scene, "sit", "chair", capsule_body,
                           trained_pose, trained_contact, seed=3, jobs=2, cfg=FAST_CFG, weights=_fast_weights())
        assert json.dumps(seq.report_dict(), sort_keys=True) == json.dumps(
            par.report_dict(), sort_keys=True
        )
