"""Quadric edge-collapse to a fixed vertex budget plus up/down mappings.

Collapses snap to surviving endpoints, so the simplified vertex set is a
subset of the original vertices: the downsample map is a selection matrix
and the upsample map carries barycentric coordinates of each original
vertex on the simplified surface. Both are row-stochastic.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from scene_placer.geometry.distance import MeshDistanceIndex
from scene_placer.geometry.mesh import TriangleMesh


@dataclass
class SimplifiedMapping:
    kept_vertices: np.ndarray          # original indices of surviving vertices
    downsample: sparse.csr_matrix      # (target, N) selection, row-stochastic
    upsample: sparse.csr_matrix        # (N, target) barycentric, row-stochastic
    simplified_faces: np.ndarray       # (Fs, 3) in simplified indexing


def _vertex_quadrics(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    quadrics = np.zeros((len(vertices), 4, 4))
    tri = vertices[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(normal, axis=1, keepdims=True)
    normal = normal / np.where(norm > 0, norm, 1.0)
    d = -np.einsum("fk,fk->f", normal, tri[:, 0])
    plane = np.concatenate([normal, d[:, None]], axis=1)
    K = np.einsum("fi,fj->fij", plane, plane)
    for corner in range(3):
        np.add.at(quadrics, faces[:, corner], K)
    return quadrics


def simplify_to_vertex_subset(
    mesh: TriangleMesh, target: int
) -> tuple[np.ndarray, np.ndarray]:
    """Collapse edges until ``target`` vertices survive.

    Returns (representative array mapping each original vertex to a
    surviving original vertex, surviving vertex indices sorted).
    """
    n = mesh.vertex_count
    if target > n:
        raise ValueError(f"target {target} exceeds vertex count {n}")
    vertices = mesh.vertices
    quadrics = _vertex_quadrics(vertices, mesh.faces)
    neighbors = [set() for _ in range(n)]
    for a, b in mesh.edges():
        neighbors[int(a)].add(int(b))
        neighbors[int(b)].add(int(a))

    parent = np.arange(n)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    version = np.zeros(n, dtype=np.int64)

    def cost(keep: int, drop: int) -> float:
        q = quadrics[keep] + quadrics[drop]
        x = np.append(vertices[keep], 1.0)
        return float(x @ q @ x)

    heap: list[tuple[float, int, int, int, int]] = []
    for a in range(n):
        for b in neighbors[a]:
            heapq.heappush(heap, (cost(a, b), a, b, 0, 0))

    active = n
    while active > target:
        if not heap:
            raise RuntimeError(
                f"edge collapse exhausted at {active} vertices (target {target})"
            )
        c, keep, drop, vk, vd = heapq.heappop(heap)
        if parent[keep] != keep or parent[drop] != drop:
            continue
        if version[keep] != vk or version[drop] != vd or keep == drop:
            continue
        parent[drop] = keep
        quadrics[keep] = quadrics[keep] + quadrics[drop]
        version[keep] += 1
        merged = neighbors[keep] | neighbors[drop]
        merged.discard(keep)
        merged.discard(drop)
        resolved = {find(w) for w in merged} - {keep}
        neighbors[keep] = resolved
        for w in resolved:
            neighbors[w].discard(drop)
            neighbors[w].add(keep)
            heapq.heappush(heap, (cost(keep, w), keep, w, version[keep], version[w]))
            heapq.heappush(heap, (cost(w, keep), w, keep, version[w], version[keep]))
        active -= 1

    rep = np.array([find(i) for i in range(n)], dtype=np.int64)
    kept = np.unique(rep)
    assert len(kept) == target
    return rep, kept


def build_simplified_mapping(mesh: TriangleMesh, target: int) -> SimplifiedMapping:
    rep, kept = simplify_to_vertex_subset(mesh, target)
    new_index = {int(old): i for i, old in enumerate(kept)}
    n = mesh.vertex_count

    mapped = np.vectorize(lambda v: new_index[int(rep[v])])(mesh.faces)
    valid = (
        (mapped[:, 0] != mapped[:, 1])
        & (mapped[:, 1] != mapped[:, 2])
        & (mapped[:, 0] != mapped[:, 2])
    )
    seen: set[tuple[int, ...]] = set()
    faces = []
    for f in mapped[valid]:
        key = tuple(sorted(f.tolist()))
        if key not in seen:
            seen.add(key)
            faces.append(f.tolist())
    simplified_faces = np.array(faces, dtype=np.int64)

    downsample = sparse.csr_matrix(
        (np.ones(target), (np.arange(target), kept)), shape=(target, n)
    )

    simplified_mesh = TriangleMesh(mesh.vertices[kept], simplified_faces)
    index = MeshDistanceIndex(simplified_mesh)
    _, _, face, bary = index.query(mesh.vertices)
    rows = np.repeat(np.arange(n), 3)
    cols = simplified_faces[face].reshape(-1)
    vals = bary.reshape(-1)
    upsample = sparse.csr_matrix((vals, (rows, cols)), shape=(n, target))
    # Coalesce duplicates and renormalize away interpolation round-off.
    upsample.sum_duplicates()
    scale = np.asarray(upsample.sum(axis=1)).reshape(-1)
    upsample = sparse.diags(1.0 / scale) @ upsample
    return SimplifiedMapping(kept, downsample, upsample.tocsr(), simplified_faces)


def spiral_table(faces: np.ndarray, vertex_count: int, length: int) -> np.ndarray:
    """Fixed-length spiral neighbor sequences per vertex.

    Sequence = vertex, its one-ring walked in consistent face orientation,
    then ring-by-ring breadth-first growth; truncated or padded (by
    repeating the last entry) to ``length``.
    """
    next_in_ring: list[dict[int, int]] = [dict() for _ in range(vertex_count)]
    neighbor_sets: list[set[int]] = [set() for _ in range(vertex_count)]
    for a, b, c in np.asarray(faces, dtype=np.int64):
        for v, p, q in ((a, b, c), (b, c, a), (c, a, b)):
            next_in_ring[v][p] = q
            neighbor_sets[v].update((p, q))

    table = np.empty((vertex_count, length), dtype=np.int64)
    for v in range(vertex_count):
        ring: list[int] = []
        if neighbor_sets[v]:
            start = min(neighbor_sets[v])
            walk = start
            for _ in range(len(neighbor_sets[v])):
                ring.append(walk)
                walk = next_in_ring[v].get(walk, -1)
                if walk == -1 or walk == start:
                    break
            remaining = sorted(neighbor_sets[v] - set(ring))
            ring.extend(remaining)  # boundary or non-manifold fallback

        spiral = [v] + ring
        frontier = ring
        seen = set(spiral)
        while len(spiral) < length and frontier:
            nxt = sorted(
                {w for u in frontier for w in neighbor_sets[u]} - seen
            )
            spiral.extend(nxt)
            seen.update(nxt)
            frontier = nxt
        spiral = spiral[:length]
        while len(spiral) < length:
            spiral.append(spiral[-1])
        table[v] = spiral
    return table
