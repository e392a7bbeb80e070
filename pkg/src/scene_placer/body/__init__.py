"""Parametric articulated body: kinematics, skinning, and asset handling."""

from scene_placer.body.rotation import (
    axis_angle_jacobian,
    axis_angle_to_matrix,
    geodesic_distance,
    yaw_matrix,
)
from scene_placer.body.model import (
    ArticulatedBody,
    PoseVector,
    PosedBody,
    interior_points,
    pose_body,
    simplify_vertices,
    upsample_feature,
)
from scene_placer.body.asset import load_body_asset, save_body_asset
from scene_placer.body.capsule import build_capsule_body

__all__ = [
    "ArticulatedBody",
    "PoseVector",
    "PosedBody",
    "axis_angle_jacobian",
    "axis_angle_to_matrix",
    "build_capsule_body",
    "geodesic_distance",
    "interior_points",
    "load_body_asset",
    "pose_body",
    "save_body_asset",
    "simplify_vertices",
    "upsample_feature",
    "yaw_matrix",
]
