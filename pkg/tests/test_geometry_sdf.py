"""SDF construction, interpolation, gradients, signs, and cache format."""

import numpy as np
import pytest

from scene_placer.fixtures import box_mesh, icosphere, torus_mesh
from scene_placer.geometry import (
    MeshDistanceIndex,
    build_sdf_grid,
    inside_test,
    load_sdf_cache,
    raycast_down,
    save_sdf_cache,
    sdf_gradient,
    sdf_query,
    winding_numbers,
)
from scene_placer.geometry.distance import closest_point_on_triangles
from scene_placer.geometry.mesh import TriangleMesh
from scene_placer.geometry.sdf import SdfGrid, sdf_query_many, sdf_query_with_gradient


@pytest.fixture(scope="module")
def cube_grid():
    return build_sdf_grid(box_mesh((0, 0, 0), (1, 1, 1)), 0.05, 0.2)


@pytest.fixture(scope="module")
def sphere_grid():
    return build_sdf_grid(icosphere(0.3, subdivisions=3), 0.02, 0.25)


@pytest.fixture(scope="module")
def floor_grid():
    # Solid half-space stand-in: a wide slab whose top face is z = 0.
    # Generous padding keeps probes half a meter up inside the grid.
    return build_sdf_grid(box_mesh((0, 0, -0.5), (4, 4, 1.0)), 0.05, 0.6)


class TestBuildSdfGrid:
    def test_cube_center_depth(self, cube_grid):
        assert sdf_query(cube_grid, [0, 0, 0]) == pytest.approx(-0.5, abs=0.05)

    def test_cube_exterior_distance(self, cube_grid):
        assert sdf_query(cube_grid, [1, 0, 0]) == pytest.approx(0.5, abs=0.05)

    def test_sphere_against_analytic_oracle(self, sphere_grid):
        rng = np.random.default_rng(42)
        probes = rng.uniform(-0.38, 0.38, size=(1000, 3))
        values = sdf_query_many(sphere_grid, probes)
        exact = np.linalg.norm(probes, axis=1) - 0.3
        assert np.abs(values - exact).max() <= 0.03

    def test_empty_mesh_rejected(self):
        empty = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3)))
        with pytest.raises(ValueError, match="no faces"):
            build_sdf_grid(empty)

    def test_voxel_budget_error_names_resolution(self):
        mesh = box_mesh((0, 0, 0), (1, 1, 1))
        with pytest.raises(ValueError, match="voxel_size >="):
            build_sdf_grid(mesh, voxel_size=0.01, padding=0.2, max_voxels=1000)

    def test_interpolation_error_bound(self, cube_grid):
        # |interpolated| can exceed the true distance only by the cell bound.
        mesh = box_mesh((0, 0, 0), (1, 1, 1))
        index = MeshDistanceIndex(mesh)
        rng = np.random.default_rng(1)
        probes = rng.uniform(-0.65, 0.65, size=(500, 3))
        vals = np.abs(sdf_query_many(cube_grid, probes))
        true, _, _, _ = index.query(probes)
        bound = cube_grid.voxel_size * np.sqrt(3) / 2
        assert np.all(vals <= true + bound + 1e-9)

    def test_mirror_symmetry(self, cube_grid):
        rng = np.random.default_rng(3)
        p = rng.uniform(-0.6, 0.6, size=(200, 3))
        mirrored = p * np.array([-1, 1, 1])
        np.testing.assert_allclose(
            sdf_query_many(cube_grid, p), sdf_query_many(cube_grid, mirrored),
            atol=1e-6,
        )

    def test_sign_modes_agree_on_watertight_cube(self):
        mesh = box_mesh((0, 0, 0), (0.6, 0.6, 0.6))
        gw = build_sdf_grid(mesh, 0.05, 0.15, sign_mode="winding")
        gp = build_sdf_grid(mesh, 0.05, 0.15, sign_mode="pseudonormal")
        np.testing.assert_allclose(gw.values, gp.values, atol=1e-5)

    def test_grid_covers_padded_aabb(self, cube_grid):
        assert np.all(cube_grid.origin <= -0.7 + 1e-12)
        assert np.all(cube_grid.upper >= 0.7 - 1e-12)


def _trilinear_oracle(grid, p):
    """Scalar-loop trilinear interpolation, independent of the implementation."""
    u = (np.asarray(p) - grid.origin) / grid.voxel_size
    cell = [int(min(max(np.floor(u[i]), 0), grid.dims[i] - 2)) for i in range(3)]
    f = [u[i] - cell[i] for i in range(3)]
    total = 0.0
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                w = (
                    (f[0] if di else 1 - f[0])
                    * (f[1] if dj else 1 - f[1])
                    * (f[2] if dk else 1 - f[2])
                )
                total += w * float(
                    grid.values[cell[0] + di, cell[1] + dj, cell[2] + dk]
                )
    return total


class TestSdfQuery:
    def test_voxel_center_identity(self, cube_grid):
        i, j, k = 4, 7, 9
        p = cube_grid.origin + cube_grid.voxel_size * np.array([i, j, k])
        assert sdf_query(cube_grid, p) == pytest.approx(
            float(cube_grid.values[i, j, k]), abs=1e-12
        )

    def test_midpoint_is_mean(self, cube_grid):
        i, j, k = 3, 5, 6
        p = cube_grid.origin + cube_grid.voxel_size * np.array([i + 0.5, j, k])
        expected = 0.5 * (
            float(cube_grid.values[i, j, k]) + float(cube_grid.values[i + 1, j, k])
        )
        assert sdf_query(cube_grid, p) == pytest.approx(expected, abs=1e-12)

    def test_matches_scalar_oracle(self, cube_grid):
        rng = np.random.default_rng(9)
        probes = rng.uniform(-0.68, 0.68, size=(300, 3))
        for p in probes:
            assert sdf_query(cube_grid, p) == pytest.approx(
                _trilinear_oracle(cube_grid, p), abs=1e-9
            )

    def test_outside_grid_positive_and_growing(self, cube_grid):
        near = sdf_query(cube_grid, [1.0, 0.0, 0.0])
        far = sdf_query(cube_grid, [3.0, 0.0, 0.0])
        assert far > near > 0
        assert far == pytest.approx(near + 2.0, abs=0.06)


class TestSdfGradient:
    def test_halfspace_gradient_points_up(self, floor_grid):
        grad, one_sided = sdf_gradient(floor_grid, [0.0, 0.0, 0.5])
        assert not one_sided
        np.testing.assert_allclose(grad, [0, 0, 1], atol=0.02)

    def test_sphere_exterior_gradient_radial(self, sphere_grid):
        grad, _ = sdf_gradient(sphere_grid, [0.5, 0.0, 0.0])
        np.testing.assert_allclose(grad, [1, 0, 0], atol=0.05)

    def test_self_consistency_smaller_step(self, sphere_grid):
        # Both step sizes must sample matching interpolation cells for the
        # comparison to probe the scheme rather than the interpolant's
        # per-cell slope jumps, so probes sit near cell centers.
        rng = np.random.default_rng(5)
        count = 0
        while count < 60:
            cell = rng.integers(2, np.array(sphere_grid.dims) - 3, size=3)
            frac = 0.5 + rng.uniform(-0.05, 0.05, 3)
            p = sphere_grid.origin + (cell + frac) * sphere_grid.voxel_size
            if not 0.36 < np.linalg.norm(p) < 0.48:
                continue  # keep to the smooth exterior shell
            count += 1
            g_half, _ = sdf_gradient(sphere_grid, p)
            g_quarter, _ = sdf_gradient(
                sphere_grid, p, step=sphere_grid.voxel_size / 4
            )
            rel = np.linalg.norm(g_half - g_quarter) / np.linalg.norm(g_quarter)
            assert rel < 1e-2
            assert abs(np.linalg.norm(g_half) - 1.0) < 0.05  # near-unit in smooth field

    def test_one_sided_flagged_near_boundary(self, cube_grid):
        edge_point = cube_grid.origin + [0.001, 0.3, 0.3]
        _, one_sided = sdf_gradient(cube_grid, edge_point)
        assert one_sided

    def test_exact_trilinear_gradient_matches_fd(self, cube_grid):
        rng = np.random.default_rng(11)
        # Keep probes off the cell-boundary lattice where the interpolant kinks.
        probes = cube_grid.origin + (
            rng.integers(1, np.array(cube_grid.dims) - 2, size=(50, 3))
            + rng.uniform(0.2, 0.8, size=(50, 3))
        ) * cube_grid.voxel_size
        vals, grads = sdf_query_with_gradient(cube_grid, probes)
        np.testing.assert_allclose(vals, sdf_query_many(cube_grid, probes), atol=1e-12)
        eps = 1e-7
        for axis in range(3):
            shift = np.zeros(3)
            shift[axis] = eps
            fd = (
                sdf_query_many(cube_grid, probes + shift)
                - sdf_query_many(cube_grid, probes - shift)
            ) / (2 * eps)
            np.testing.assert_allclose(grads[:, axis], fd, atol=1e-5)


class TestInsideTest:
    def test_cube_points(self):
        cube = box_mesh((0, 0, 0), (1, 1, 1))
        assert inside_test(cube, [[0, 0, 0]])[0]
        assert not inside_test(cube, [[2, 2, 2]])[0]

    def test_torus_against_ray_parity_oracle(self):
        torus = torus_mesh(0.5, 0.2)
        rng = np.random.default_rng(17)
        points = rng.uniform(-0.8, 0.8, size=(500, 3))
        ours = inside_test(torus, points)
        oracle = np.array([_ray_parity_inside(torus, p) for p in points])
        assert np.array_equal(ours, oracle)

    def test_winding_number_values(self):
        cube = box_mesh((0, 0, 0), (1, 1, 1))
        w = winding_numbers(cube, [[0, 0, 0], [5, 5, 5]])
        np.testing.assert_allclose(w, [1.0, 0.0], atol=1e-9)


def _ray_parity_inside(mesh, point, direction=(0.5773, 0.5774, 0.5775)):
    """Moller-Trumbore crossing-parity oracle (watertight meshes only)."""
    d = np.asarray(direction) / np.linalg.norm(direction)
    tri = mesh.triangles()
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    h = np.cross(d, e2)
    a = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(a) > 1e-12
    f = 1.0 / np.where(ok, a, 1.0)
    s = point - tri[:, 0]
    u = f * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = f * np.einsum("j,ij->i", d, q)
    t = f * np.einsum("ij,ij->i", e2, q)
    hits = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-10)
    return int(hits.sum()) % 2 == 1


class TestDistanceIndex:
    def test_matches_brute_force(self):
        mesh = icosphere(0.4, subdivisions=2)
        rng = np.random.default_rng(23)
        pts = rng.uniform(-0.8, 0.8, size=(200, 3))
        dist, closest, face, bary = MeshDistanceIndex(mesh).query(pts)
        tri = mesh.triangles()
        cp, _ = closest_point_on_triangles(
            pts[:, None, :], tri[None, :, 0], tri[None, :, 1], tri[None, :, 2]
        )
        brute = np.linalg.norm(cp - pts[:, None, :], axis=2).min(axis=1)
        np.testing.assert_allclose(dist, brute, atol=1e-12)
        # Barycentric reconstruction matches the closest point (no subdivision).
        recon = np.einsum("ik,ikj->ij", bary, tri[face])
        np.testing.assert_allclose(recon, closest, atol=1e-9)

    def test_subdivided_index_same_distances(self):
        mesh = box_mesh((0, 0, 0), (2, 2, 0.3))
        rng = np.random.default_rng(29)
        pts = rng.uniform(-1.5, 1.5, size=(200, 3))
        plain, _, _, _ = MeshDistanceIndex(mesh).query(pts)
        fine, _, _, _ = MeshDistanceIndex(mesh, max_edge=0.2).query(pts)
        np.testing.assert_allclose(plain, fine, atol=1e-12)


class TestRaycastDown:
    def test_hits_top_face(self):
        mesh = box_mesh((0, 0, 0.5), (1, 1, 1))
        hit = raycast_down(mesh, np.array([0.1, -0.2]), 5.0)
        assert hit is not None
        z, _ = hit
        assert z == pytest.approx(1.0, abs=1e-9)

    def test_miss_outside_footprint(self):
        mesh = box_mesh((0, 0, 0.5), (1, 1, 1))
        assert raycast_down(mesh, np.array([2.0, 0.0]), 5.0) is None

    def test_start_below_top_hits_next_surface(self):
        mesh = box_mesh((0, 0, 0.5), (1, 1, 1))
        hit = raycast_down(mesh, np.array([0.0, 0.0]), 0.5)
        assert hit is not None and hit[0] == pytest.approx(0.0, abs=1e-9)

    def test_face_subset_restriction(self):
        mesh = box_mesh((0, 0, 0.5), (1, 1, 1))
        labels = raycast_down(mesh, np.array([0.0, 0.0]), 5.0)
        assert labels is not None
        # Restricting to the hit face keeps the hit; excluding it changes z.
        z_full, face = labels
        hit2 = raycast_down(mesh, np.array([0.0, 0.0]), 5.0, face_subset=[face])
        assert hit2 is not None and hit2[0] == pytest.approx(z_full)


class TestSdfCache:
    def test_roundtrip(self, tmp_path, cube_grid):
        path = tmp_path / "cube.sdf"
        save_sdf_cache(cube_grid, path)
        back = load_sdf_cache(path)
        assert back.dims == cube_grid.dims
        assert back.voxel_size == cube_grid.voxel_size
        np.testing.assert_allclose(back.origin, cube_grid.origin)
        np.testing.assert_array_equal(back.values, cube_grid.values)

    def test_layout_is_x_fastest(self, tmp_path):
        values = np.arange(2 * 3 * 4, dtype=np.float32).reshape(2, 3, 4)
        grid = SdfGrid(np.zeros(3), 0.1, (2, 3, 4), values)
        path = tmp_path / "tiny.sdf"
        save_sdf_cache(grid, path)
        raw = path.read_bytes()
        header = 6 + 24 + 8 + 12
        flat = np.frombuffer(raw[header:], dtype="<f4")
        # x varies fastest: first two entries are values[0,0,0], values[1,0,0].
        assert flat[0] == values[0, 0, 0]
        assert flat[1] == values[1, 0, 0]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.sdf"
        path.write_bytes(b"NOTSDF" + b"\0" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_sdf_cache(path)

    def test_truncated(self, tmp_path, cube_grid):
        path = tmp_path / "trunc.sdf"
        save_sdf_cache(cube_grid, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ValueError, match="truncated"):
            load_sdf_cache(path)
