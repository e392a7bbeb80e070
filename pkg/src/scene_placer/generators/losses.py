"""Training losses for the two generators, with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scene_placer.body.model import (
    ArticulatedBody,
    pose_vertices_batch,
    pose_vertices_batch_backward,
)
from scene_placer.body.rotation import (
    axis_angle_jacobian_batch,
    axis_angle_to_matrix_batch,
)
from scene_placer.generators.nets import LatentDistribution
from scene_placer.geometry.sdf import sdf_query_many
from scene_placer.scene import Scene


@dataclass
class LossWeights:
    """Per-term loss weights (training defaults follow the experiment setup)."""

    lambda_m: float = 2.0
    lambda_v: float = 4.0
    lambda_j: float = 2.0
    lambda_kl_pose: float = 0.005
    lambda_rec: float = 1.0
    lambda_kl_contact: float = 0.001

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


def kl_divergence(
    dist: LatentDistribution,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch-mean closed-form KL(N(mu, sigma^2) || N(0, I)) and its gradients."""
    mu, log_var = dist.mu, dist.log_var
    batch = len(mu)
    var = np.exp(log_var)
    value = 0.5 * np.sum(mu**2 + var - 1.0 - log_var) / batch
    d_mu = mu / batch
    d_log_var = 0.5 * (var - 1.0) / batch
    return float(value), d_mu, d_log_var


def pose_loss(
    body: ArticulatedBody,
    theta_hat: np.ndarray,
    theta_rec: np.ndarray,
    dist: LatentDistribution,
    weights: LossWeights,
    hat_cache: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, dict, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Pose reconstruction loss.

    Terms: mean per-joint geodesic rotation distance, mean-L1 vertex and
    joint errors (through the body's kinematics), and the latent KL.

    Args:
        hat_cache: optional precomputed (vertices, joints) of ``theta_hat``
            (they carry no gradient, so corpora cache them).

    Returns:
        (total, per-term breakdown, (d_theta_rec, d_mu, d_log_var))
    """
    batch = len(theta_rec)
    joints_free = theta_rec.shape[1] // 3

    r_hat = axis_angle_to_matrix_batch(theta_hat.reshape(-1, 3))
    r_rec = axis_angle_to_matrix_batch(theta_rec.reshape(-1, 3))
    trace = np.einsum("mij,mij->m", r_hat, r_rec)
    x = np.clip((trace - 1.0) / 2.0, -1.0, 1.0)
    loss_m = float(np.arccos(x).sum() / (batch * joints_free))
    # d arccos(x)/d R_rec = -R_hat / (2 sqrt(1 - x^2)), clamped at the ends.
    denom = np.sqrt(np.maximum(1.0 - x**2, 1e-12))
    d_r = (-0.5 / denom)[:, None, None] * r_hat / (batch * joints_free)
    jac = axis_angle_jacobian_batch(theta_rec.reshape(-1, 3))
    d_theta_m = np.einsum("mad,miad->mi", d_r, jac, optimize=True)
    d_theta_m = d_theta_m.reshape(batch, -1)

    if hat_cache is None:
        hat = pose_vertices_batch(body, theta_hat)
        v_hat, j_hat = hat.vertices, hat.joints
    else:
        v_hat, j_hat = hat_cache
    rec = pose_vertices_batch(body, theta_rec)

    dv = rec.vertices - v_hat
    loss_v = float(np.abs(dv).mean(axis=(1, 2)).mean())
    dj = rec.joints - j_hat
    loss_j = float(np.abs(dj).mean(axis=(1, 2)).mean())
    g_v = np.sign(dv) / (batch * dv[0].size) * weights.lambda_v
    g_j = np.sign(dj) / (batch * dj[0].size) * weights.lambda_j
    d_theta_vj = pose_vertices_batch_backward(rec, g_v, g_j)

    loss_kl, d_mu, d_log_var = kl_divergence(dist)

    total = (
        weights.lambda_m * loss_m
        + weights.lambda_v * loss_v
        + weights.lambda_j * loss_j
        + weights.lambda_kl_pose * loss_kl
    )
    breakdown = {
        "rotation": loss_m,
        "vertices": loss_v,
        "joints": loss_j,
        "kl": loss_kl,
    }
    d_theta = weights.lambda_m * d_theta_m + d_theta_vj
    return total, breakdown, (
        d_theta,
        weights.lambda_kl_pose * d_mu,
        weights.lambda_kl_pose * d_log_var,
    )


def contact_loss(
    f_hat: np.ndarray,
    f_rec: np.ndarray,
    dist: LatentDistribution,
    weights: LossWeights,
) -> tuple[float, dict, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Mean-squared contact reconstruction plus latent KL."""
    batch = len(f_rec)
    diff = f_rec - f_hat
    loss_rec = float((diff**2).mean(axis=1).mean())
    d_rec = 2.0 * diff / (batch * f_rec.shape[1]) * weights.lambda_rec
    loss_kl, d_mu, d_log_var = kl_divergence(dist)
    total = weights.lambda_rec * loss_rec + weights.lambda_kl_contact * loss_kl
    breakdown = {"reconstruction": loss_rec, "kl": loss_kl}
    return total, breakdown, (
        d_rec,
        weights.lambda_kl_contact * d_mu,
        weights.lambda_kl_contact * d_log_var,
    )


def contact_labels(
    simplified_vertices: np.ndarray, scene: Scene, delta: float = 0.05
) -> np.ndarray:
    """Ground-truth contact probability per simplified vertex.

    clamp(1 - d / delta) with d the non-negative scene distance: 1 on the
    surface, linearly falling to 0 at ``delta`` meters away.
    """
    sdf = scene.require_sdf()
    d = np.maximum(sdf_query_many(sdf, simplified_vertices), 0.0)
    return np.clip(1.0 - d / delta, 0.0, 1.0)
