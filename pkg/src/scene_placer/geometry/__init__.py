"""Triangle-mesh primitives, signed distance fields, and spatial queries."""

from scene_placer.geometry.mesh import (
    Aabb,
    TriangleMesh,
    compute_aabb,
    connected_components,
    sample_surface_points,
)
from scene_placer.geometry.distance import MeshDistanceIndex, raycast_down
from scene_placer.geometry.winding import inside_test, winding_numbers
from scene_placer.geometry.sdf import (
    SdfGrid,
    build_sdf_grid,
    load_sdf_cache,
    save_sdf_cache,
    sdf_gradient,
    sdf_query,
)
from scene_placer.geometry.io import load_mesh, save_mesh

__all__ = [
    "Aabb",
    "TriangleMesh",
    "MeshDistanceIndex",
    "SdfGrid",
    "build_sdf_grid",
    "compute_aabb",
    "connected_components",
    "inside_test",
    "load_mesh",
    "load_sdf_cache",
    "raycast_down",
    "sample_surface_points",
    "save_mesh",
    "save_sdf_cache",
    "sdf_gradient",
    "sdf_query",
    "winding_numbers",
]
