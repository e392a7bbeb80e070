"""Core triangle-mesh containers and combinatorial queries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Aabb:
    """Axis-aligned bounding box with componentwise ``min <= max``."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64).reshape(3)
        self.max = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(self.min > self.max):
            raise ValueError(f"invalid Aabb: min {self.min} exceeds max {self.max}")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.min) & (p <= self.max), axis=1)


@dataclass
class TriangleMesh:
    """Indexed triangle mesh in meters, with optional per-face labels.

    Labels, when present, hold a ``(category_id, instance_id)`` pair per face.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.face_labels is not None:
            self.face_labels = np.asarray(self.face_labels, dtype=np.int64).reshape(-1, 2)
        self.validate()

    def validate(self):
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError(
                    f"face index out of range: vertex count {len(self.vertices)}, "
                    f"face index range [{self.faces.min()}, {self.faces.max()}]"
                )
            degenerate = (
                (self.faces[:, 0] == self.faces[:, 1])
                | (self.faces[:, 1] == self.faces[:, 2])
                | (self.faces[:, 0] == self.faces[:, 2])
            )
            if degenerate.any():
                raise ValueError(
                    f"{int(degenerate.sum())} degenerate faces (repeated vertex index), "
                    f"first at face {int(np.flatnonzero(degenerate)[0])}"
                )
        if self.face_labels is not None and len(self.face_labels) != len(self.faces):
            raise ValueError(
                f"face label count {len(self.face_labels)} != face count {len(self.faces)}"
            )

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def triangles(self, face_subset: np.ndarray | None = None) -> np.ndarray:
        """Per-face vertex coordinates with shape (F, 3, 3)."""
        faces = self.faces if face_subset is None else self.faces[np.asarray(face_subset)]
        return self.vertices[faces]

    def face_areas(self, face_subset: np.ndarray | None = None) -> np.ndarray:
        tri = self.triangles(face_subset)
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def edges(self, face_subset: np.ndarray | None = None) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) index array."""
        faces = self.faces if face_subset is None else self.faces[np.asarray(face_subset)]
        if len(faces) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [0, 2]]])
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)

    def translated(self, offset: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=np.float64),
                            self.faces, self.face_labels)


def compute_aabb(mesh: TriangleMesh, face_subset: np.ndarray | None = None) -> Aabb:
    """Bounding box of the vertices referenced by ``face_subset`` (all, if None).

    Raises:
        ValueError: if the face subset is empty or references nothing.
    """
    if face_subset is None:
        verts = mesh.vertices
    else:
        face_subset = np.asarray(face_subset, dtype=np.int64)
        if face_subset.size == 0:
            raise ValueError("compute_aabb: empty face subset")
        verts = mesh.vertices[np.unique(mesh.faces[face_subset])]
    if len(verts) == 0:
        raise ValueError("compute_aabb: mesh has no vertices")
    return Aabb(verts.min(axis=0), verts.max(axis=0))


def connected_components(vertex_count: int, edges: np.ndarray) -> np.ndarray:
    """Undirected connected-component ids, one per vertex.

    Ids are dense from 0 and ordered by each component's smallest vertex
    index, so the labeling is deterministic for a given graph.
    """
    parent = list(range(vertex_count))

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= vertex_count):
        raise ValueError(
            f"edge index out of range for vertex count {vertex_count}"
        )
    for a, b in edges:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    labels = np.empty(vertex_count, dtype=np.int64)
    next_id = 0
    seen: dict[int, int] = {}
    for v in range(vertex_count):
        r = find(v)
        if r not in seen:
            seen[r] = next_id
            next_id += 1
        labels[v] = seen[r]
    return labels


def sample_surface_points(
    mesh: TriangleMesh,
    face_subset: np.ndarray | None,
    count: int,
    seed: int,
) -> np.ndarray:
    """Area-weighted uniform surface samples, deterministic for a fixed seed.

    Args:
        mesh: source mesh.
        face_subset: optional face indices restricting the sampled region.
        count: number of samples, > 0.
        seed: RNG seed.

    Returns:
        (count, 3) array of points on the mesh surface.

    Raises:
        ValueError: on non-positive count, empty subset, or zero total area.
    """
    if count <= 0:
        raise ValueError(f"sample count must be positive, got {count}")
    if face_subset is not None:
        face_subset = np.asarray(face_subset, dtype=np.int64)
        if face_subset.size == 0:
            raise ValueError("sample_surface_points: empty face subset")
    areas = mesh.face_areas(face_subset)
    total = areas.sum()
    if not total > 0:
        raise ValueError("sample_surface_points: zero total surface area")

    rng = np.random.default_rng(seed)
    tri = mesh.triangles(face_subset)
    face_idx = rng.choice(len(tri), size=count, p=areas / total)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    chosen = tri[face_idx]
    return (
        chosen[:, 0]
        + u[:, None] * (chosen[:, 1] - chosen[:, 0])
        + v[:, None] * (chosen[:, 2] - chosen[:, 0])
    )
