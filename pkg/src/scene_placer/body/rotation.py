"""Axis-angle rotations, their Jacobians, and rotation-space distances."""

from __future__ import annotations

import numpy as np


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=np.float64)


def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues rotation for an axis-angle 3-vector (zero maps to identity)."""
    aa = np.asarray(aa, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(aa)
    K = _skew(aa)
    if theta < 1e-8:
        # Second-order series keeps the map smooth through zero.
        return np.eye(3) + K + 0.5 * (K @ K)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * K
        + ((1.0 - np.cos(theta)) / theta**2) * (K @ K)
    )


def axis_angle_to_matrix_batch(aa: np.ndarray) -> np.ndarray:
    """Vectorized Rodrigues for an (M, 3) stack of axis-angle vectors."""
    aa = np.asarray(aa, dtype=np.float64).reshape(-1, 3)
    theta = np.linalg.norm(aa, axis=1)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    k1 = np.where(small, 1.0, np.sin(theta) / safe)
    k2 = np.where(small, 0.5, (1.0 - np.cos(theta)) / safe**2)
    K = np.zeros((len(aa), 3, 3))
    K[:, 0, 1] = -aa[:, 2]
    K[:, 0, 2] = aa[:, 1]
    K[:, 1, 0] = aa[:, 2]
    K[:, 1, 2] = -aa[:, 0]
    K[:, 2, 0] = -aa[:, 1]
    K[:, 2, 1] = aa[:, 0]
    return np.eye(3) + k1[:, None, None] * K + k2[:, None, None] * (K @ K)


def axis_angle_jacobian(aa: np.ndarray) -> np.ndarray:
    """Derivative of the Rodrigues map: (3, 3, 3) array, [i] = dR/d aa_i."""
    aa = np.asarray(aa, dtype=np.float64).reshape(3)
    theta2 = float(aa @ aa)
    R = axis_angle_to_matrix(aa)
    jac = np.empty((3, 3, 3))
    if theta2 < 1e-16:
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            jac[i] = _skew(e)
        return jac
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        v = np.cross(aa, (np.eye(3) - R) @ e)
        jac[i] = ((aa[i] * _skew(aa) + _skew(v)) / theta2) @ R
    return jac


def axis_angle_jacobian_batch(aa: np.ndarray) -> np.ndarray:
    """Vectorized Rodrigues derivative: (M, 3, 3, 3), [m, i] = dR_m/d aa_i."""
    aa = np.asarray(aa, dtype=np.float64).reshape(-1, 3)
    m = len(aa)
    R = axis_angle_to_matrix_batch(aa)
    theta2 = np.einsum("mi,mi->m", aa, aa)
    small = theta2 < 1e-16
    safe = np.where(small, 1.0, theta2)

    def skew_batch(v):
        out = np.zeros((len(v), 3, 3))
        out[:, 0, 1] = -v[:, 2]
        out[:, 0, 2] = v[:, 1]
        out[:, 1, 0] = v[:, 2]
        out[:, 1, 2] = -v[:, 0]
        out[:, 2, 0] = -v[:, 1]
        out[:, 2, 1] = v[:, 0]
        return out

    K = skew_batch(aa)
    eye_minus = np.eye(3) - R
    jac = np.empty((m, 3, 3, 3))
    for i in range(3):
        v = np.cross(aa, eye_minus[:, :, i])
        term = aa[:, i, None, None] * K + skew_batch(v)
        jac[:, i] = np.einsum("mab,mbc->mac", term / safe[:, None, None], R)
        e = np.zeros((m, 3))
        e[:, i] = 1.0
        jac[small, i] = skew_batch(e)[small]
    return jac


def geodesic_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle of the relative rotation between two rotation matrices, in [0, pi]."""
    trace = float(np.trace(np.asarray(r1).T @ np.asarray(r2)))
    return float(np.arccos(np.clip((trace - 1.0) / 2.0, -1.0, 1.0)))


def geodesic_distance_batch(r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    trace = np.einsum("...ij,...ij->...", r1, r2)
    return np.arccos(np.clip((trace - 1.0) / 2.0, -1.0, 1.0))


def geodesic_distance_grad(r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Gradient of ``geodesic_distance`` with respect to its second argument.

    The distance has an arccos singularity at 0 and pi; the derivative is
    clamped there, which optimizers tolerate (the loss is already at an
    extremum of the clamp).
    """
    trace = np.einsum("ij,ij->", r1, r2)
    x = np.clip((trace - 1.0) / 2.0, -1.0, 1.0)
    denom = np.sqrt(max(1.0 - x * x, 1e-12))
    return (-0.5 / denom) * np.asarray(r1, dtype=np.float64)


def yaw_matrix(yaw: float) -> np.ndarray:
    """Rotation about the +z (gravity) axis."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_matrix_derivative(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
