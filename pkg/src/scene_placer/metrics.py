"""Evaluation metrics: physical plausibility per placement and pose
diversity over a corpus of placements."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from scene_placer.body.model import ArticulatedBody, PosedBody, interior_sources, skin_points
from scene_placer.geometry.mesh import TriangleMesh
from scene_placer.geometry.sdf import sdf_query_many
from scene_placer.scene import Scene

DEFAULT_CLUSTER_COUNT = 50


def non_collision(scene: Scene, body_mesh: TriangleMesh) -> float:
    """Fraction of body vertices with strictly positive scene SDF."""
    values = sdf_query_many(scene.require_sdf(), body_mesh.vertices)
    return float((values > 0.0).mean())


def volume_non_collision(scene: Scene, interior: np.ndarray) -> float:
    """Fraction of body-interior points with non-negative scene SDF.

    Complements the vertex ratio: a thin limb passing through a wall moves
    few vertices below the surface but sweeps interior volume."""
    values = sdf_query_many(scene.require_sdf(), interior)
    return float((values >= 0.0).mean())


def contact_metric(scene: Scene, body_mesh: TriangleMesh) -> int:
    """1 when any body vertex is below the scene surface, else 0."""
    values = sdf_query_many(scene.require_sdf(), body_mesh.vertices)
    return int((values < 0.0).any())


def body_interior(body: ArticulatedBody, posed: PosedBody) -> np.ndarray:
    points, weights = interior_sources(body)
    return skin_points(posed, points, weights)


def kmeans(
    points: np.ndarray, k: int = DEFAULT_CLUSTER_COUNT, seed: int = 0,
    max_iterations: int = 300,
) -> tuple[np.ndarray, np.ndarray]:
    """Plus-plus-seeded Lloyd clustering to an assignment fixpoint.

    Raises:
        ValueError: with advice when there are fewer points than clusters.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n < k:
        raise ValueError(
            f"{n} points cannot fill {k} clusters; use a smaller k"
        )
    rng = np.random.default_rng(seed)

    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest_sq = np.full(n, np.inf)
    for i in range(1, k):
        closest_sq = np.minimum(
            closest_sq, ((points - centers[i - 1]) ** 2).sum(axis=1)
        )
        total = closest_sq.sum()
        if total <= 0:
            centers[i:] = points[rng.integers(n, size=k - i)]
            break
        centers[i] = points[rng.choice(n, p=closest_sq / total)]

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iterations):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignments = d2.argmin(axis=1)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for c in range(k):
            members = points[assignments == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return assignments, centers


def kmeans_objective(points, assignments, centers) -> float:
    """Within-cluster sum of squared distances."""
    return float(((points - centers[assignments]) ** 2).sum())


def entropy_metric(assignments: np.ndarray, k: int) -> float:
    """Natural-log entropy of the cluster-id histogram (empty bins drop out)."""
    counts = np.bincount(np.asarray(assignments, dtype=np.int64), minlength=k)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def cluster_size_metric(points, assignments, centers) -> float:
    """Mean over non-empty clusters of the mean member-to-center distance."""
    points = np.asarray(points, dtype=np.float64)
    sizes = []
    for c in range(len(centers)):
        members = points[assignments == c]
        if len(members):
            sizes.append(
                float(np.linalg.norm(members - centers[c], axis=1).mean())
            )
    return float(np.mean(sizes)) if sizes else 0.0


@dataclass
class EvaluationReport:
    """Per-placement plausibility plus corpus-level diversity."""

    nc: list[float] = field(default_factory=list)
    vnc: list[float] = field(default_factory=list)
    contact: list[int] = field(default_factory=list)
    entropy: float | None = None
    cluster_size: float | None = None
    cluster_count: int = DEFAULT_CLUSTER_COUNT
    seed: int = 0

    def add_placement(self, scene: Scene, body: ArticulatedBody,
                      posed: PosedBody) -> None:
        self.nc.append(non_collision(scene, posed.mesh))
        self.vnc.append(volume_non_collision(
            scene, body_interior(body, posed)
        ))
        self.contact.append(contact_metric(scene, posed.mesh))

    def add_diversity(self, thetas: np.ndarray) -> None:
        assignments, centers = kmeans(
            thetas, k=self.cluster_count, seed=self.seed
        )
        self.entropy = entropy_metric(assignments, self.cluster_count)
        self.cluster_size = cluster_size_metric(thetas, assignments, centers)

    def summary(self) -> dict:
        out = {
            "count": len(self.nc),
            "nc_mean": float(np.mean(self.nc)) if self.nc else None,
            "vnc_mean": float(np.mean(self.vnc)) if self.vnc else None,
            "contact_rate": float(np.mean(self.contact)) if self.contact else None,
            "entropy": self.entropy,
            "cluster_size": self.cluster_size,
            "cluster_count": self.cluster_count,
            "seed": self.seed,
        }
        return out
