"""Candidate generation over target objects, physical feasibility tests, and
the end-to-end placement pipeline.

Candidates sweep a symmetric grid over the object's footprint crossed with
four planar facing directions. The penetration test drops candidates whose
free-space portion splits into multiple connected components (a limb passed
through geometry); the contact test drops candidates without enough
high-probability vertices actually near the target object.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from scene_placer.body.model import (
    ArticulatedBody,
    PoseVector,
    pose_body,
    upsample_feature,
)
from scene_placer.geometry.distance import raycast_down
from scene_placer.geometry.mesh import TriangleMesh, connected_components
from scene_placer.geometry.sdf import sdf_query_many
from scene_placer.optimizer import EnergyWeights, optimize, total_energy
from scene_placer.scene import (
    Scene,
    SceneObject,
    object_distance_index,
    object_points,
    query_objects,
)

logger = logging.getLogger(__name__)

ACTIONS = ("stand", "sit", "lie")
YAWS = (0.0, np.pi / 2, np.pi, 3 * np.pi / 2)

STATUS_PENDING = "pending"
STATUS_REJECTED_PENETRATION = "rejected_penetration"
STATUS_REJECTED_CONTACT = "rejected_contact"
STATUS_FEASIBLE = "feasible"


@dataclass
class FeasibilityConfig:
    """Grid and feasibility-test thresholds (lengths in meters)."""

    grid_spacing: float = 0.1
    contact_prob_threshold: float = 0.5
    contact_dist_threshold: float = 0.05
    min_contact_count: int = 20
    clearance: float = 0.005

    def __post_init__(self):
        if self.grid_spacing <= 0 or self.clearance <= 0:
            raise ValueError("grid_spacing and clearance must be positive")
        if not 0 <= self.contact_prob_threshold <= 1:
            raise ValueError("contact_prob_threshold must lie in [0, 1]")
        if self.contact_dist_threshold <= 0 or self.min_contact_count < 0:
            raise ValueError("invalid contact test thresholds")


@dataclass
class PlacementCandidate:
    """One grid position and facing direction flowing through the tests."""

    index: int
    instance_id: int
    grid_xy: np.ndarray
    yaw: float
    pose: PoseVector | None = None
    status: str = STATUS_PENDING
    reason: str = ""
    diagnostics: dict = field(default_factory=dict)

    def reject(self, status: str, reason: str):
        if self.status not in (STATUS_PENDING, STATUS_FEASIBLE):
            raise RuntimeError(f"candidate {self.index} already terminal")
        self.status = status
        self.reason = reason


def generate_candidates(
    obj: SceneObject, cfg: FeasibilityConfig
) -> list[PlacementCandidate]:
    """Symmetric grid over the object's footprint crossed with four yaws.

    Deterministic order: x-major, then y, then yaw. A footprint smaller
    than one spacing degenerates to its center point.
    """
    lo, hi = obj.aabb.min[:2], obj.aabb.max[:2]
    axes = []
    for a in range(2):
        extent = hi[a] - lo[a]
        n = int(np.floor(extent / cfg.grid_spacing + 1e-9)) + 1
        offset = (extent - (n - 1) * cfg.grid_spacing) / 2.0
        axes.append(lo[a] + offset + cfg.grid_spacing * np.arange(n))
    candidates = []
    index = 0
    for x in axes[0]:
        for y in axes[1]:
            for yaw in YAWS:
                candidates.append(PlacementCandidate(
                    index=index,
                    instance_id=obj.instance_id,
                    grid_xy=np.array([x, y]),
                    yaw=float(yaw),
                ))
                index += 1
    return candidates


def init_height(
    scene: Scene,
    obj: SceneObject,
    candidate: PlacementCandidate,
    body: ArticulatedBody,
    theta: np.ndarray,
    contact: np.ndarray,
    cfg: FeasibilityConfig,
    occlusion_check: bool = False,
) -> PlacementCandidate:
    """Drop the body onto the object at the candidate's grid point.

    A ray from above the object's box finds the support height; the lowest
    vertex among high-contact vertices lands there plus the clearance. No
    hit (or, for floor placements, a hit shadowed by another instance)
    rejects the candidate.
    """
    z_start = obj.aabb.max[2] + 1e-6
    hit = raycast_down(scene.mesh, candidate.grid_xy, z_start,
                       face_subset=obj.face_indices)
    if hit is None:
        candidate.reject(STATUS_REJECTED_CONTACT, "no_support_hit")
        return candidate
    hit_z, _ = hit
    if occlusion_check:
        top = float(scene.mesh.vertices[:, 2].max()) + 1.0
        first = raycast_down(scene.mesh, candidate.grid_xy, top)
        if first is not None:
            _, face_idx = first
            if int(scene.mesh.face_labels[face_idx, 1]) != obj.instance_id:
                candidate.reject(STATUS_REJECTED_CONTACT, "occluded")
                return candidate

    high = contact > cfg.contact_prob_threshold
    if not high.any():
        candidate.reject(STATUS_REJECTED_CONTACT, "no_contact_vertices")
        return candidate
    local = pose_body(body, PoseVector(theta, candidate.yaw, np.zeros(3)))
    root_xy = body.rest_joints[0, :2]
    t_z = hit_z + cfg.clearance - local.vertices[high, 2].min()
    translation = np.array([
        candidate.grid_xy[0] - root_xy[0],
        candidate.grid_xy[1] - root_xy[1],
        t_z,
    ])
    candidate.pose = PoseVector(theta, candidate.yaw, translation)
    candidate.diagnostics["support_z"] = float(hit_z)
    return candidate


def penetration_test(
    scene: Scene, body_mesh: TriangleMesh
) -> tuple[bool, int, dict]:
    """Thorough-penetration detector.

    Vertices get the scene SDF sign; faces mixing signs are removed and the
    remaining graph's positive part is counted: two or more positive
    connected components mean a limb passed through geometry. A fully
    submerged body passes vacuously and is flagged in the diagnostics.
    """
    sdf = scene.require_sdf()
    values = sdf_query_many(sdf, body_mesh.vertices)
    positive = values > 0.0

    def component_count(mask: np.ndarray) -> int:
        if not mask.any():
            return 0
        faces = body_mesh.faces
        keep = mask[faces].all(axis=1)
        sub = faces[keep]
        compact = -np.ones(body_mesh.vertex_count, dtype=np.int64)
        ids = np.flatnonzero(mask)
        compact[ids] = np.arange(len(ids))
        if len(sub):
            pairs = np.concatenate([sub[:, [0, 1]], sub[:, [1, 2]], sub[:, [0, 2]]])
            edges = compact[np.unique(np.sort(pairs, axis=1), axis=0)]
        else:
            edges = np.zeros((0, 2), dtype=np.int64)
        labels = connected_components(len(ids), edges)
        return int(labels.max()) + 1

    mixed = positive[body_mesh.faces]
    diagnostics = {
        "positive_vertex_count": int(positive.sum()),
        "negative_vertex_count": int((~positive).sum()),
        "mixed_face_count": int((mixed.any(axis=1) & ~mixed.all(axis=1)).sum()),
        "positive_component_count": component_count(positive),
        "negative_component_count": component_count(~positive),
        "fully_submerged": bool(not positive.any()),
    }
    passed = diagnostics["positive_component_count"] <= 1
    return passed, diagnostics["positive_component_count"], diagnostics


def contact_test(
    scene: Scene,
    obj: SceneObject,
    body_mesh: TriangleMesh,
    contact: np.ndarray,
    cfg: FeasibilityConfig,
) -> tuple[bool, int]:
    """Count real contact vertices: high probability and near the object."""
    high = contact > cfg.contact_prob_threshold
    if not high.any():
        return cfg.min_contact_count <= 0, 0
    dist, _, _, _ = object_distance_index(scene, obj).query(
        body_mesh.vertices[high]
    )
    count = int((dist < cfg.contact_dist_threshold).sum())
    return count >= cfg.min_contact_count, count


@dataclass
class PipelineResult:
    action: str
    category: str
    seed: int
    theta: np.ndarray
    contact: np.ndarray
    candidates: list[PlacementCandidate]
    placements: list[dict]
    tallies: dict

    @property
    def feasible_count(self) -> int:
        return len(self.placements)

    def report_dict(self) -> dict:
        """Deterministic report payload (timings live in the caller's meta)."""
        per_candidate = []
        for c in self.candidates:
            entry = {
                "index": c.index,
                "instance_id": c.instance_id,
                "grid_xy": [float(c.grid_xy[0]), float(c.grid_xy[1])],
                "yaw": float(c.yaw),
                "status": c.status,
                "reason": c.reason,
            }
            entry.update({
                k: v for k, v in c.diagnostics.items()
                if isinstance(v, (int, float, bool, str))
            })
            per_candidate.append(entry)
        placements = []
        for p in self.placements:
            placements.append({
                "candidate_index": p["candidate_index"],
                "instance_id": p["instance_id"],
                "theta": [float(x) for x in p["pose"].theta],
                "yaw": float(p["pose"].yaw),
                "translation": [float(x) for x in p["pose"].translation],
                "energy": p["energy"],
                "breakdown": p["breakdown"],
                "real_contact_count": p["real_contact_count"],
                "positive_component_count": p["positive_component_count"],
            })
        return {
            "action": self.action,
            "category": self.category,
            "seed": self.seed,
            "tallies": dict(sorted(self.tallies.items())),
            "candidates": per_candidate,
            "placements": placements,
        }


def run_pipeline(
    scene: Scene,
    action: str,
    category: str,
    body: ArticulatedBody,
    pose_model,
    contact_model,
    cfg: FeasibilityConfig | None = None,
    weights: EnergyWeights | None = None,
    seed: int = 0,
    enable_pft: bool = True,
    enable_opt: bool = True,
    optimize_root: bool = True,
    object_point_count: int = 2048,
    jobs: int = 1,
) -> PipelineResult:
    """Decode pose and contact, enumerate candidates, filter, optimize.

    Deterministic for a fixed seed. Returns every candidate with a terminal
    status plus the surviving placements ranked by final energy. With the
    feasibility tests enabled, surviving placements are re-checked after
    optimization so the output invariants hold.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown action '{action}'; valid: {', '.join(ACTIONS)}")
    cfg = cfg or FeasibilityConfig()
    weights = weights or EnergyWeights()
    rng = np.random.default_rng(seed)

    action_code = np.zeros((1, 3))
    action_code[0, ACTIONS.index(action)] = 1.0
    z_pose = rng.standard_normal((1, 64))
    theta = pose_model.decode(
        z_pose.astype(np.float64), action_code
    )[0].astype(np.float64)
    theta = _canonical_axis_angles(theta)

    local = pose_body(body, PoseVector(theta))
    simplified = (body.downsample @ local.vertices)[None]
    cat_id = scene.category_id(category)
    objects = query_objects(scene, category)
    dtype = contact_model.dtype
    obj_code = np.zeros((1, 42), dtype=dtype)
    if cat_id is not None and cat_id < 42:
        obj_code[0, cat_id] = 1.0
    z_contact = rng.standard_normal((1, 256)).astype(dtype)
    simplified_contact = contact_model.decode(
        z_contact, simplified.astype(dtype), obj_code
    )[0].astype(np.float64)
    contact = upsample_feature(body, simplified_contact)

    candidates: list[PlacementCandidate] = []
    placements: list[dict] = []
    if objects:
        offset = 0
        point_sets = {}
        for obj in objects:
            point_sets[obj.instance_id] = object_points(
                scene, obj, object_point_count, seed=seed + obj.instance_id
            )
            obj_candidates = generate_candidates(obj, cfg)
            for c in obj_candidates:
                c.index += offset
            offset += len(obj_candidates)
            candidates.extend(obj_candidates)

        occlusion = category == "floor"
        objects_by_id = {obj.instance_id: obj for obj in objects}

        def evaluate(candidate: PlacementCandidate):
            obj = objects_by_id[candidate.instance_id]
            init_height(scene, obj, candidate, body, theta, contact, cfg,
                        occlusion_check=occlusion)
            if candidate.status != STATUS_PENDING:
                return candidate, None
            posed = pose_body(body, candidate.pose)
            if enable_pft:
                ok, n_comp, diag = penetration_test(scene, posed.mesh)
                candidate.diagnostics.update(diag)
                if not ok:
                    candidate.reject(STATUS_REJECTED_PENETRATION,
                                     "thorough_penetration")
                    return candidate, None
                ok, count = contact_test(scene, obj, posed.mesh, contact, cfg)
                candidate.diagnostics["real_contact_count"] = count
                if not ok:
                    candidate.reject(STATUS_REJECTED_CONTACT,
                                     "insufficient_contact")
                    return candidate, None

            pose = candidate.pose
            trace = []
            if enable_opt:
                pose, trace, info = optimize(
                    body, scene, pose, contact, point_sets[obj.instance_id],
                    weights, cfg.contact_prob_threshold,
                    optimize_root=optimize_root,
                )
                candidate.diagnostics["optimizer_iterations"] = info["iterations"]
                candidate.diagnostics["optimizer_diverged"] = info["diverged"]
            final_posed = pose_body(body, pose)
            energy, breakdown = total_energy(
                body, scene, pose, contact, point_sets[obj.instance_id],
                weights, candidate.pose.theta, cfg.contact_prob_threshold,
            )
            pen_ok, n_comp, diag = penetration_test(scene, final_posed.mesh)
            con_ok, count = contact_test(scene, obj, final_posed.mesh, contact, cfg)
            if enable_pft and not pen_ok:
                candidate.reject(STATUS_REJECTED_PENETRATION,
                                 "post_optimization_penetration")
                return candidate, None
            if enable_pft and not con_ok:
                candidate.reject(STATUS_REJECTED_CONTACT,
                                 "post_optimization_contact")
                return candidate, None
            candidate.status = STATUS_FEASIBLE
            placement = {
                "candidate_index": candidate.index,
                "instance_id": candidate.instance_id,
                "pose": pose,
                "energy": float(energy),
                "breakdown": {k: float(v) for k, v in breakdown.items()},
                "real_contact_count": int(count),
                "positive_component_count": int(n_comp),
                "trace": trace,
            }
            return candidate, placement

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(evaluate, candidates))
        else:
            results = [evaluate(c) for c in candidates]
        for _, placement in results:
            if placement is not None:
                placements.append(placement)
        placements.sort(key=lambda p: (p["energy"], p["candidate_index"]))

    tallies = {
        STATUS_REJECTED_PENETRATION: 0,
        STATUS_REJECTED_CONTACT: 0,
        STATUS_FEASIBLE: 0,
    }
    for c in candidates:
        if c.status == STATUS_PENDING:
            raise RuntimeError(f"candidate {c.index} left pending")
        tallies[c.status] = tallies.get(c.status, 0) + 1

    if not placements:
        logger.info("no feasible placement for (%s, %s): %s",
                    action, category, tallies)
    return PipelineResult(
        action=action, category=category, seed=seed, theta=theta,
        contact=contact, candidates=candidates, placements=placements,
        tallies=tallies,
    )


def _canonical_axis_angles(theta: np.ndarray) -> np.ndarray:
    """Wrap each joint's axis-angle onto the minimal representative.

    Decoded rotations are only defined up to 2-pi turns about the same
    axis; wrapping preserves the rotation exactly while satisfying the
    pose validity bound.
    """
    aa = theta.reshape(-1, 3).copy()
    norms = np.linalg.norm(aa, axis=1)
    needs = norms > np.pi
    if needs.any():
        wrapped = np.mod(norms[needs], 2.0 * np.pi)
        wrapped = np.where(wrapped > np.pi, wrapped - 2.0 * np.pi, wrapped)
        aa[needs] = aa[needs] / norms[needs, None] * wrapped[:, None]
    return aa.reshape(-1)
