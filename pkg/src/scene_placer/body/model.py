"""Articulated body model: forward kinematics, blend skinning, and their
reverse-mode derivatives with respect to pose, yaw, and translation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from scene_placer.body.rotation import (
    axis_angle_jacobian,
    axis_angle_jacobian_batch,
    axis_angle_to_matrix,
    axis_angle_to_matrix_batch,
    yaw_matrix,
    yaw_matrix_derivative,
)
from scene_placer.geometry.mesh import TriangleMesh

BODY_JOINT_COUNT = 22
POSE_DOF = (BODY_JOINT_COUNT - 1) * 3  # 63: every joint but the root


@dataclass
class PoseVector:
    """Body pose: per-joint axis-angle rotations (63 values for the standard
    22-joint body), root yaw, and translation."""

    theta: np.ndarray = field(default_factory=lambda: np.zeros(POSE_DOF))
    yaw: float = 0.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if len(self.theta) % 3:
            raise ValueError(f"theta length {len(self.theta)} not a multiple of 3")
        self.yaw = float(self.yaw)
        self.translation = np.asarray(
            self.translation, dtype=np.float64
        ).reshape(3)
        norms = np.linalg.norm(self.theta.reshape(-1, 3), axis=1)
        if np.any(norms >= np.pi + 1e-3):
            j = int(norms.argmax())
            raise ValueError(
                f"axis-angle norm {norms[j]:.4f} at joint {j + 1} exceeds pi"
            )

    def copy(self) -> "PoseVector":
        return PoseVector(self.theta.copy(), self.yaw, self.translation.copy())


@dataclass
class ArticulatedBody:
    """Immutable body asset: template, skeleton, skinning, and mappings."""

    template_vertices: np.ndarray
    faces: np.ndarray
    parent: np.ndarray
    joint_names: list[str]
    joint_regressor: np.ndarray
    skinning_weights: np.ndarray
    downsample: sparse.csr_matrix
    upsample: sparse.csr_matrix
    simplified_faces: np.ndarray
    spiral_indices: np.ndarray
    interior_attach: np.ndarray | None = None
    interior_offsets: np.ndarray | None = None

    def __post_init__(self):
        self.template_vertices = np.asarray(self.template_vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.joint_regressor = np.asarray(self.joint_regressor, dtype=np.float64)
        self.skinning_weights = np.asarray(self.skinning_weights, dtype=np.float64)
        self.validate()
        self.rest_joints = self.joint_regressor @ self.template_vertices

    def validate(self):
        j = len(self.parent)
        if self.parent[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        if np.any(self.parent[1:] >= np.arange(1, j)):
            raise ValueError("parents must precede children in joint order")
        w_sums = self.skinning_weights.sum(axis=1)
        if np.any(np.abs(w_sums - 1.0) > 1e-6) or np.any(self.skinning_weights < -1e-9):
            raise ValueError("skinning weight rows must be non-negative and sum to 1")
        r_sums = self.joint_regressor.sum(axis=1)
        if np.any(np.abs(r_sums - 1.0) > 1e-6):
            raise ValueError("joint regressor rows must sum to 1")
        for name, mat in (("downsample", self.downsample), ("upsample", self.upsample)):
            sums = np.asarray(mat.sum(axis=1)).reshape(-1)
            if np.any(np.abs(sums - 1.0) > 1e-6) or mat.min() < -1e-9:
                raise ValueError(f"{name} must be row-stochastic")

    @property
    def vertex_count(self) -> int:
        return len(self.template_vertices)

    @property
    def joint_count(self) -> int:
        return len(self.parent)

    @property
    def simplified_count(self) -> int:
        return self.downsample.shape[0]


@dataclass
class PosedBody:
    """Forward kinematics result with everything the backward pass needs."""

    body: ArticulatedBody
    pose: PoseVector
    local_rotations: np.ndarray   # (J, 3, 3)
    world_rotations: np.ndarray   # (J, 3, 3)
    world_positions: np.ndarray   # (J, 3), before global translation
    vertices: np.ndarray          # (N, 3) posed, translation applied

    @property
    def joints(self) -> np.ndarray:
        return self.world_positions + self.pose.translation

    @property
    def mesh(self) -> TriangleMesh:
        return TriangleMesh(self.vertices, self.body.faces)


def _forward_kinematics(body: ArticulatedBody, pose: PoseVector):
    j_count = body.joint_count
    if len(pose.theta) != 3 * (j_count - 1):
        raise ValueError(
            f"pose has {len(pose.theta)} dof, body expects {3 * (j_count - 1)}"
        )
    rest = body.rest_joints
    local = np.empty((j_count, 3, 3))
    local[0] = yaw_matrix(pose.yaw)
    for j in range(1, j_count):
        local[j] = axis_angle_to_matrix(pose.theta[3 * (j - 1): 3 * j])

    world = np.empty_like(local)
    positions = np.empty((j_count, 3))
    world[0] = local[0]
    positions[0] = rest[0]
    for j in range(1, j_count):
        p = body.parent[j]
        world[j] = world[p] @ local[j]
        positions[j] = positions[p] + world[p] @ (rest[j] - rest[p])
    return local, world, positions


def skin_points(
    posed: PosedBody, points: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Blend-skin arbitrary canonical points with per-point joint weights."""
    body = posed.body
    rest = body.rest_joints
    W = posed.world_rotations
    b = posed.world_positions - np.einsum("jab,jb->ja", W, rest, optimize=True)
    blended_rot = np.einsum("pj,jab->pab", weights, W, optimize=True)
    blended_off = weights @ b
    return (
        np.einsum("pab,pb->pa", blended_rot, points, optimize=True)
        + blended_off
        + posed.pose.translation
    )


def pose_body(body: ArticulatedBody, pose: PoseVector) -> PosedBody:
    """Pose the template: yaw at the root, axis-angle at body joints, then
    linear blend skinning and global translation."""
    local, world, positions = _forward_kinematics(body, pose)
    posed = PosedBody(body, pose, local, world, positions, np.empty(0))
    posed.vertices = skin_points(
        posed, body.template_vertices, body.skinning_weights
    )
    return posed


def skinning_gradients(
    posed: PosedBody,
    points: np.ndarray,
    weights: np.ndarray,
    grad_points: np.ndarray,
    grad_joints: np.ndarray | None = None,
) -> tuple[np.ndarray, float, np.ndarray]:
    """Reverse-mode derivatives of skinned points (and optionally joints).

    Args:
        posed: forward result from ``pose_body``.
        points: (M, 3) canonical points that were skinned.
        weights: (M, J) blend weights used.
        grad_points: (M, 3) upstream gradient on the skinned output.
        grad_joints: optional (J, 3) upstream gradient on posed joints.

    Returns:
        (d_theta (63,), d_yaw, d_translation (3,))
    """
    body = posed.body
    j_count = body.joint_count
    rest = body.rest_joints
    W = posed.world_rotations

    d_translation = grad_points.sum(axis=0)
    # Output = sum_j w_pj (W_j p + b_j) + t with b_j = P_j - W_j rest_j.
    dW = np.einsum("pj,pa,pb->jab", weights, grad_points, points, optimize=True)
    db = np.einsum("pj,pa->ja", weights, grad_points, optimize=True)
    dP = db.copy()
    dW -= np.einsum("ja,jb->jab", db, rest, optimize=True)

    if grad_joints is not None:
        dP += grad_joints
        d_translation = d_translation + grad_joints.sum(axis=0)

    # Walk the tree leaves-first, pushing gradients to parents.
    dW = dW.copy()
    for j in range(j_count - 1, 0, -1):
        p = body.parent[j]
        dW[p] += dW[j] @ posed.local_rotations[j].T
        dW[p] += np.einsum("a,b->ab", dP[j], rest[j] - rest[p], optimize=True)
        dP[p] += dP[j]

    d_theta = np.empty(3 * (j_count - 1))
    for j in range(1, j_count):
        p = body.parent[j]
        dR = W[p].T @ dW[j]
        jac = axis_angle_jacobian(posed.pose.theta[3 * (j - 1): 3 * j])
        d_theta[3 * (j - 1): 3 * j] = np.einsum("ab,iab->i", dR, jac, optimize=True)
    d_yaw = float(np.sum(dW[0] * yaw_matrix_derivative(posed.pose.yaw)))
    return d_theta, d_yaw, d_translation


@dataclass
class BatchedPose:
    """Cache of a batched root-identity forward pass (training hot path)."""

    body: ArticulatedBody
    theta: np.ndarray             # (B, dof)
    local_rotations: np.ndarray   # (B, J, 3, 3)
    world_rotations: np.ndarray   # (B, J, 3, 3)
    world_positions: np.ndarray   # (B, J, 3)
    vertices: np.ndarray          # (B, N, 3)

    @property
    def joints(self) -> np.ndarray:
        return self.world_positions


def pose_vertices_batch(body: ArticulatedBody, theta: np.ndarray) -> BatchedPose:
    """Batched FK + skinning at identity root (no yaw, no translation).

    This is the evaluation the reconstruction losses need; posing one body
    at a time would dominate training time.
    """
    theta = np.asarray(theta, dtype=np.float64)
    batch = len(theta)
    j_count = body.joint_count
    rest = body.rest_joints
    local = np.empty((batch, j_count, 3, 3))
    local[:, 0] = np.eye(3)
    local[:, 1:] = axis_angle_to_matrix_batch(
        theta.reshape(batch, j_count - 1, 3).reshape(-1, 3)
    ).reshape(batch, j_count - 1, 3, 3)

    world = np.empty_like(local)
    positions = np.empty((batch, j_count, 3))
    world[:, 0] = local[:, 0]
    positions[:, 0] = rest[0]
    for j in range(1, j_count):
        p = body.parent[j]
        world[:, j] = np.einsum("bac,bcd->bad", world[:, p], local[:, j], optimize=True)
        positions[:, j] = positions[:, p] + np.einsum(
            "bac,c->ba", world[:, p], rest[j] - rest[p]
        , optimize=True)

    offsets = positions - np.einsum("bjac,jc->bja", world, rest, optimize=True)
    blended_rot = np.einsum("nj,bjac->bnac", body.skinning_weights, world, optimize=True)
    blended_off = np.einsum("nj,bja->bna", body.skinning_weights, offsets, optimize=True)
    vertices = (
        np.einsum("bnac,nc->bna", blended_rot, body.template_vertices, optimize=True)
        + blended_off
    )
    return BatchedPose(body, theta, local, world, positions, vertices)


def pose_vertices_batch_backward(
    cache: BatchedPose,
    grad_vertices: np.ndarray | None,
    grad_joints: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of a scalar loss with respect to the batched pose thetas."""
    body = cache.body
    batch, j_count = cache.world_rotations.shape[:2]
    rest = body.rest_joints
    weights = body.skinning_weights
    X = body.template_vertices

    if grad_vertices is not None:
        dW = np.einsum("nj,bna,nc->bjac", weights, grad_vertices, X, optimize=True)
        db = np.einsum("nj,bna->bja", weights, grad_vertices, optimize=True)
    else:
        dW = np.zeros((batch, j_count, 3, 3))
        db = np.zeros((batch, j_count, 3))
    dP = db.copy()
    dW -= np.einsum("bja,jc->bjac", db, rest, optimize=True)
    if grad_joints is not None:
        dP += grad_joints

    for j in range(j_count - 1, 0, -1):
        p = body.parent[j]
        dW[:, p] += np.einsum(
            "bac,bdc->bad", dW[:, j], cache.local_rotations[:, j]
        , optimize=True)
        dW[:, p] += np.einsum("ba,c->bac", dP[:, j], rest[j] - rest[p], optimize=True)
        dP[:, p] += dP[:, j]

    dR_local = np.einsum(
        "bjca,bjcd->bjad", cache.world_rotations[:, body.parent[1:]], dW[:, 1:]
    , optimize=True)
    jac = axis_angle_jacobian_batch(
        cache.theta.reshape(batch * (j_count - 1), 3)
    ).reshape(batch, j_count - 1, 3, 3, 3)
    d_theta = np.einsum("bjad,bjiad->bji", dR_local, jac, optimize=True)
    return d_theta.reshape(batch, -1)


def simplify_vertices(body: ArticulatedBody, vertices: np.ndarray) -> np.ndarray:
    """Project full-resolution vertices onto the simplified vertex set."""
    return body.downsample @ np.asarray(vertices, dtype=np.float64)


def upsample_feature(body: ArticulatedBody, feature: np.ndarray) -> np.ndarray:
    """Lift a per-simplified-vertex feature to the full mesh, staying in [0, 1]."""
    feature = np.asarray(feature, dtype=np.float64).reshape(body.simplified_count)
    out = body.upsample @ feature
    return np.clip(out, 0.0, 1.0)


def interior_points(body: ArticulatedBody, posed: PosedBody) -> np.ndarray:
    """Canonical interior samples transported by their attachment vertices'
    blend transforms."""
    points, weights = interior_sources(body)
    return skin_points(posed, points, weights)


def interior_sources(body: ArticulatedBody) -> tuple[np.ndarray, np.ndarray]:
    """Canonical positions and blend weights of the interior samples."""
    if body.interior_attach is None or body.interior_offsets is None:
        raise ValueError(
            "body asset lacks canonical interior samples; rebuild the asset"
        )
    points = (
        body.template_vertices[body.interior_attach] + body.interior_offsets
    )
    weights = body.skinning_weights[body.interior_attach]
    return points, weights
