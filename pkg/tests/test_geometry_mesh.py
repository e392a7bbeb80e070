"""Mesh container, bounding boxes, components, sampling, and file IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scene_placer.fixtures import box_mesh, icosphere
from scene_placer.geometry import (
    Aabb,
    TriangleMesh,
    compute_aabb,
    connected_components,
    load_mesh,
    sample_surface_points,
    save_mesh,
)


class TestTriangleMesh:
    def test_face_index_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])

    def test_degenerate_face_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            TriangleMesh(np.zeros((3, 3)), [[0, 1, 1]])

    def test_label_count_mismatch(self):
        with pytest.raises(ValueError, match="label count"):
            TriangleMesh(np.eye(3), [[0, 1, 2]], face_labels=np.zeros((2, 2)))

    def test_edges_unique_undirected(self):
        mesh = box_mesh((0, 0, 0), (1, 1, 1))
        edges = mesh.edges()
        assert np.all(edges[:, 0] < edges[:, 1])
        assert len(np.unique(edges, axis=0)) == len(edges)
        # Euler: V - E + F = 2 for a closed genus-0 surface.
        assert mesh.vertex_count - len(edges) + mesh.face_count == 2


class TestComputeAabb:
    def test_unit_cube(self):
        box = compute_aabb(box_mesh((0, 0, 0), (1, 1, 1)))
        np.testing.assert_allclose(box.min, [-0.5, -0.5, -0.5])
        np.testing.assert_allclose(box.max, [0.5, 0.5, 0.5])

    def test_single_vertex_mesh(self):
        mesh = TriangleMesh(np.array([[1.0, 2.0, 3.0]]), np.zeros((0, 3)))
        box = compute_aabb(mesh)
        np.testing.assert_allclose(box.min, [1, 2, 3])
        np.testing.assert_allclose(box.max, [1, 2, 3])

    def test_matches_naive_scan(self):
        rng = np.random.default_rng(7)
        verts = rng.normal(size=(50, 3))
        faces = rng.choice(50, size=(30, 3), replace=True)
        keep = (
            (faces[:, 0] != faces[:, 1])
            & (faces[:, 1] != faces[:, 2])
            & (faces[:, 0] != faces[:, 2])
        )
        mesh = TriangleMesh(verts, faces[keep])
        subset = np.arange(0, len(mesh.faces), 2)
        box = compute_aabb(mesh, subset)
        ref = verts[np.unique(mesh.faces[subset])]
        np.testing.assert_allclose(box.min, ref.min(axis=0))
        np.testing.assert_allclose(box.max, ref.max(axis=0))

    def test_empty_subset_rejected(self):
        mesh = box_mesh((0, 0, 0), (1, 1, 1))
        with pytest.raises(ValueError, match="empty"):
            compute_aabb(mesh, np.array([], dtype=int))

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            Aabb([1, 0, 0], [0, 1, 1])


def _bfs_partition(n, edges):
    """Independent BFS oracle returning frozensets of components."""
    adj = {i: [] for i in range(n)}
    for a, b in edges:
        adj[int(a)].append(int(b))
        adj[int(b)].append(int(a))
    seen = set()
    parts = []
    for start in range(n):
        if start in seen:
            continue
        queue, comp = [start], set()
        while queue:
            v = queue.pop()
            if v in comp:
                continue
            comp.add(v)
            queue.extend(adj[v])
        seen |= comp
        parts.append(frozenset(comp))
    return set(parts)


class TestConnectedComponents:
    def test_two_pairs(self):
        labels = connected_components(4, [(0, 1), (2, 3)])
        np.testing.assert_array_equal(labels, [0, 0, 1, 1])

    def test_no_edges(self):
        labels = connected_components(3, np.zeros((0, 2)))
        np.testing.assert_array_equal(labels, [0, 1, 2])

    def test_labels_ordered_by_smallest_vertex(self):
        labels = connected_components(5, [(3, 4), (1, 2)])
        np.testing.assert_array_equal(labels, [0, 1, 1, 2, 2])

    def test_out_of_range_edge(self):
        with pytest.raises(ValueError, match="out of range"):
            connected_components(2, [(0, 2)])

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_matches_bfs_oracle_on_random_graphs(self, data):
        n = data.draw(st.integers(1, 50))
        m = data.draw(st.integers(0, 80))
        edges = data.draw(
            st.lists(
                st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                min_size=m, max_size=m,
            )
        )
        labels = connected_components(n, np.array(edges).reshape(-1, 2))
        ours = {
            frozenset(np.flatnonzero(labels == c).tolist())
            for c in np.unique(labels)
        }
        assert ours == _bfs_partition(n, edges)
        # Dense ids from zero.
        assert sorted(np.unique(labels)) == list(range(len(ours)))


class TestSampleSurfacePoints:
    def test_single_triangle_stats(self):
        mesh = TriangleMesh(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float), [[0, 1, 2]]
        )
        pts = sample_surface_points(mesh, None, 1000, seed=3)
        assert np.all(pts[:, 2] == 0)
        assert np.all(pts[:, 0] >= -1e-12) and np.all(pts[:, 1] >= -1e-12)
        assert np.all(pts[:, 0] + pts[:, 1] <= 1 + 1e-12)
        np.testing.assert_allclose(pts.mean(axis=0), [1 / 3, 1 / 3, 0], atol=0.05)

    def test_area_weighting(self):
        verts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [10, 10, 0], [11, 10, 0], [10, 13, 0]],
            dtype=float,
        )
        mesh = TriangleMesh(verts, [[0, 1, 2], [3, 4, 5]])  # areas 0.5 and 1.5
        pts = sample_surface_points(mesh, None, 10000, seed=5)
        frac = np.mean(pts[:, 0] > 5)
        assert abs(frac - 0.75) < 0.03

    def test_deterministic(self):
        mesh = box_mesh((0, 0, 0), (1, 1, 1))
        a = sample_surface_points(mesh, None, 100, seed=11)
        b = sample_surface_points(mesh, None, 100, seed=11)
        np.testing.assert_array_equal(a, b)

    def test_samples_lie_on_surface(self):
        from scene_placer.geometry import MeshDistanceIndex

        mesh = icosphere(0.5, subdivisions=2)
        pts = sample_surface_points(mesh, None, 500, seed=2)
        dist, _, _, _ = MeshDistanceIndex(mesh).query(pts)
        assert dist.max() < 1e-9

    def test_zero_area_error(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        mesh = TriangleMesh(verts, [[0, 1, 2]])
        with pytest.raises(ValueError, match="zero total"):
            sample_surface_points(mesh, None, 10, seed=0)

    def test_count_validation(self):
        mesh = box_mesh((0, 0, 0), (1, 1, 1))
        with pytest.raises(ValueError, match="positive"):
            sample_surface_points(mesh, None, 0, seed=0)


class TestMeshIO:
    def test_obj_roundtrip(self, tmp_path):
        mesh = icosphere(0.3, subdivisions=1)
        path = tmp_path / "sphere.obj"
        save_mesh(mesh, path)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-6)
        np.testing.assert_array_equal(back.faces, mesh.faces)

    def test_ply_roundtrip(self, tmp_path):
        mesh = box_mesh((0.5, -1.0, 2.0), (1, 2, 3))
        path = tmp_path / "box.ply"
        save_mesh(mesh, path)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-6)
        np.testing.assert_array_equal(back.faces, mesh.faces)

    def test_ascii_ply(self, tmp_path):
        path = tmp_path / "tri.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "element face 1\nproperty list uchar int vertex_indices\n"
            "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
        )
        mesh = load_mesh(path)
        assert mesh.vertex_count == 3 and mesh.face_count == 1

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_mesh("/nonexistent/mesh.obj")

    def test_quad_obj_triangulated(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        mesh = load_mesh(path)
        assert mesh.face_count == 2
