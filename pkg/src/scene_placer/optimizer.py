"""Placement refinement: minimize weighted contact, volume-penetration, and
pose-regularization energies over body pose, translation, and yaw.

The contact term pulls high-probability contact vertices onto sampled object
points through a bounded robust penalty; nearest-point correspondences are
frozen within an iteration and refreshed between iterations. All gradients
are analytic (chain rule through blend skinning and the trilinear SDF).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from scene_placer.body.model import (
    ArticulatedBody,
    PoseVector,
    PosedBody,
    interior_sources,
    pose_body,
    skin_points,
    skinning_gradients,
)
from scene_placer.geometry.sdf import sdf_query_many, sdf_query_with_gradient
from scene_placer.scene import Scene

logger = logging.getLogger(__name__)


@dataclass
class EnergyWeights:
    """Objective weights and optimizer settings."""

    lambda_wc: float = 1.0
    lambda_vp: float = 10.0
    lambda_r: float = 50.0
    gm_sigma: float = 0.1
    learning_rate: float = 0.01
    max_iters: int = 200

    def __post_init__(self):
        if min(self.lambda_wc, self.lambda_vp, self.lambda_r) < 0:
            raise ValueError("energy weights must be non-negative")
        if self.gm_sigma <= 0:
            raise ValueError("gm_sigma must be positive")


def gm_rho(e: np.ndarray, sigma: float) -> np.ndarray:
    """Geman-McClure penalty: e^2 s^2 / (e^2 + s^2), bounded above by s^2."""
    e2 = np.square(e)
    return e2 * sigma**2 / (e2 + sigma**2)


def gm_rho_grad(e: np.ndarray, sigma: float) -> np.ndarray:
    e2 = np.square(e)
    return 2.0 * e * sigma**4 / np.square(e2 + sigma**2)


def e_wc(
    vertices: np.ndarray,
    contact: np.ndarray,
    object_points: np.ndarray,
    prob_threshold: float,
    sigma: float,
    correspondences: np.ndarray | None = None,
    tree: cKDTree | None = None,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Weighted contact energy and its gradient on the contact vertices.

    Returns (value, contact vertex indices, per-vertex gradient (K, 3),
    correspondences used). Correspondences may be passed in frozen;
    otherwise the nearest object point per contact vertex is looked up.
    """
    if len(object_points) == 0:
        raise ValueError("e_wc requires a non-empty object point set")
    idx = np.flatnonzero(contact > prob_threshold)
    if idx.size == 0:
        logger.warning("no contact vertices above %.2f; contact term is 0",
                       prob_threshold)
        return 0.0, idx, np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    v = vertices[idx]
    if correspondences is None:
        if tree is None:
            tree = cKDTree(object_points)
        _, correspondences = tree.query(v)
    targets = object_points[correspondences]
    delta = v - targets
    dist = np.linalg.norm(delta, axis=1)
    f = contact[idx]
    value = float(np.sum(f * gm_rho(dist, sigma)))
    safe = np.where(dist > 1e-12, dist, 1.0)
    grad = (f * gm_rho_grad(dist, sigma) / safe)[:, None] * delta
    return value, idx, grad, correspondences


def e_vp(scene: Scene, interior: np.ndarray) -> tuple[float, np.ndarray]:
    """Volume penetration energy: sum of |SDF| over penetrating interior
    points, with its gradient on those points."""
    sdf = scene.require_sdf()
    values, grads = sdf_query_with_gradient(sdf, interior)
    inside = values < 0.0
    value = float(np.abs(values[inside]).sum())
    grad = np.zeros_like(interior)
    grad[inside] = -grads[inside]
    return value, grad


def e_r(theta: np.ndarray, theta_init: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared pose deviation from the initial pose, with gradient."""
    diff = theta - theta_init
    return float(np.mean(diff**2)), 2.0 * diff / len(theta)


@dataclass
class OptimState:
    pose: PoseVector
    initial_theta: np.ndarray
    trace: list[dict] = field(default_factory=list)


def total_energy(
    body: ArticulatedBody,
    scene: Scene,
    pose: PoseVector,
    contact: np.ndarray,
    object_points: np.ndarray,
    weights: EnergyWeights,
    theta_init: np.ndarray,
    prob_threshold: float = 0.5,
    correspondences: np.ndarray | None = None,
    tree: cKDTree | None = None,
    posed: PosedBody | None = None,
) -> tuple[float, dict]:
    """Weighted objective E = l_wc E_wc + l_vp E_vp + l_r E_r."""
    value, breakdown, _ = _energy_with_gradients(
        body, scene, pose, contact, object_points, weights, theta_init,
        prob_threshold, correspondences, tree, posed, want_gradient=False,
    )
    return value, breakdown


def gradient(
    body: ArticulatedBody,
    scene: Scene,
    pose: PoseVector,
    contact: np.ndarray,
    object_points: np.ndarray,
    weights: EnergyWeights,
    theta_init: np.ndarray,
    prob_threshold: float = 0.5,
    correspondences: np.ndarray | None = None,
    tree: cKDTree | None = None,
) -> np.ndarray:
    """Analytic objective gradient: 67 entries (theta 63, translation 3, yaw)."""
    _, _, grad = _energy_with_gradients(
        body, scene, pose, contact, object_points, weights, theta_init,
        prob_threshold, correspondences, tree, None, want_gradient=True,
    )
    return grad


def energy_and_gradient(
    body, scene, pose, contact, object_points, weights, theta_init,
    prob_threshold=0.5, tree=None,
) -> tuple[float, dict, np.ndarray]:
    """One forward pass yielding the objective, its breakdown, and gradient."""
    return _energy_with_gradients(
        body, scene, pose, contact, object_points, weights, theta_init,
        prob_threshold, None, tree, None, want_gradient=True,
    )


def _energy_with_gradients(
    body, scene, pose, contact, object_points, weights, theta_init,
    prob_threshold, correspondences, tree, posed, want_gradient,
):
    if posed is None:
        posed = pose_body(body, pose)

    wc_value, wc_idx, wc_grad, _ = e_wc(
        posed.vertices, contact, object_points, prob_threshold,
        weights.gm_sigma, correspondences, tree,
    )
    interior_pts, interior_weights = interior_sources(body)
    interior = skin_points(posed, interior_pts, interior_weights)
    vp_value, vp_grad = e_vp(scene, interior)
    r_value, r_grad = e_r(pose.theta, theta_init)

    for name, term in (("contact", wc_value), ("penetration", vp_value),
                       ("regularization", r_value)):
        if not np.isfinite(term):
            raise FloatingPointError(f"energy term '{name}' is non-finite")

    total = (
        weights.lambda_wc * wc_value
        + weights.lambda_vp * vp_value
        + weights.lambda_r * r_value
    )
    breakdown = {"contact": wc_value, "penetration": vp_value,
                 "regularization": r_value}
    if not want_gradient:
        return total, breakdown, None

    grad_vertices = np.zeros_like(posed.vertices)
    grad_vertices[wc_idx] = weights.lambda_wc * wc_grad
    d_theta_v, d_yaw_v, d_t_v = skinning_gradients(
        posed, body.template_vertices, body.skinning_weights, grad_vertices
    )
    d_theta_i, d_yaw_i, d_t_i = skinning_gradients(
        posed, interior_pts, interior_weights, weights.lambda_vp * vp_grad
    )
    d_theta = d_theta_v + d_theta_i + weights.lambda_r * r_grad
    d_t = d_t_v + d_t_i
    d_yaw = d_yaw_v + d_yaw_i
    return total, breakdown, np.concatenate([d_theta, d_t, [d_yaw]])


def optimize(
    body: ArticulatedBody,
    scene: Scene,
    pose: PoseVector,
    contact: np.ndarray,
    object_points: np.ndarray,
    weights: EnergyWeights,
    prob_threshold: float = 0.5,
    optimize_root: bool = True,
    convergence_tol: float = 1e-5,
    convergence_window: int = 10,
    theta_init: np.ndarray | None = None,
) -> tuple[PoseVector, list[dict], dict]:
    """Refine a feasible candidate by adaptive-moment descent.

    Correspondences refresh every iteration; interior points re-skin with
    the pose. The step size halves whenever the energy plateaus, so the
    terminal oscillation of the adaptive steps dies out. Never returns a
    pose with higher energy than the input (the best-seen state wins;
    divergence falls back to the input).

    Args:
        theta_init: regularization anchor; defaults to the starting pose.

    Returns:
        (refined pose, per-iteration trace, info dict with flags)
    """
    theta_init = pose.theta.copy() if theta_init is None else np.asarray(theta_init)
    tree = cKDTree(object_points) if len(object_points) else None
    state = np.concatenate([pose.theta, pose.translation, [pose.yaw]])

    def unpack(x) -> PoseVector:
        return PoseVector(x[:63], float(x[66]), x[63:66])

    trace: list[dict] = []
    best_state = state.copy()
    best_energy = np.inf
    energy0 = None

    m = np.zeros_like(state)
    v = np.zeros_like(state)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    info = {"diverged": False, "iterations": 0}
    lr = weights.learning_rate
    since_improvement = 0
    phase_step = 0

    for it in range(weights.max_iters + 1):
        energy, breakdown, grad = energy_and_gradient(
            body, scene, unpack(state), contact, object_points, weights,
            theta_init, prob_threshold, tree=tree,
        )
        trace.append({"iteration": it, "total": energy, **breakdown})
        info["iterations"] = it
        if energy0 is None:
            energy0 = energy
            info["initial_energy"] = energy0
        meaningful = best_energy - max(1e-4 * abs(best_energy), 1e-12)
        if energy < best_energy:
            if energy < meaningful:
                since_improvement = 0
            best_energy = energy
            best_state = state.copy()
        if energy >= meaningful and it > 0:
            since_improvement += 1
            if since_improvement >= 2:
                # Warm restart at a lower step size: fresh moments adapt to
                # the local scale immediately instead of dragging history.
                lr *= 0.4
                m[:] = 0.0
                v[:] = 0.0
                phase_step = 0
                state = best_state.copy()
                since_improvement = 0
        if energy > 10.0 * max(energy0, 1e-12):
            info["diverged"] = True
            logger.warning("optimization diverged at iteration %d", it)
            break
        if it >= convergence_window:
            window = [t["total"] for t in trace[-convergence_window:]]
            span = max(window) - min(window)
            if span < convergence_tol * max(abs(window[-1]), 1e-12):
                break
        if it == weights.max_iters:
            break

        if not optimize_root:
            grad[63:] = 0.0
        phase_step += 1
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1**phase_step)
        v_hat = v / (1 - beta2**phase_step)
        state = state - lr * m_hat / (np.sqrt(v_hat) + eps)
        # Axis-angle stays within its chart; clip the rare runaway joint.
        aa = state[:63].reshape(21, 3)
        norms = np.linalg.norm(aa, axis=1)
        over = norms > 3.0
        if over.any():
            aa[over] *= (3.0 / norms[over])[:, None]
            state[:63] = aa.reshape(-1)

    if info["diverged"]:
        final = pose.copy()
        info["final_energy"] = energy0
    else:
        final = unpack(best_state)
        info["final_energy"] = best_energy
    return final, trace, info


def save_trace_csv(trace: list[dict], path) -> None:
    """Per-iteration energy breakdown as CSV for plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,total,contact,penetration,regularization\n")
        for row in trace:
            fh.write(
                f"{row['iteration']},{row['total']:.9g},{row['contact']:.9g},"
                f"{row['penetration']:.9g},{row['regularization']:.9g}\n"
            )
