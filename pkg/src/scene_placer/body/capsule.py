"""Procedural synthetic body: a capsule skeleton meshed into one watertight
surface via marching cubes over the analytic capsule-union distance field.

The result is a connected manifold template (the downstream penetration test
relies on body connectivity), with smooth skinning weights derived from bone
distances and a vertex-based joint regressor.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from scene_placer.body.mc_tables import EDGE_TABLE, TRI_TABLE
from scene_placer.geometry.mesh import TriangleMesh

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
)

PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19],
    dtype=np.int64,
)

# Rest skeleton: z-up, body facing +x, standing on z = 0.
JOINT_POSITIONS = np.array([
    [0.00, 0.00, 0.95],    # pelvis
    [0.00, 0.09, 0.91],    # left_hip
    [0.00, -0.09, 0.91],   # right_hip
    [0.00, 0.00, 1.06],    # spine1
    [0.00, 0.10, 0.50],    # left_knee
    [0.00, -0.10, 0.50],   # right_knee
    [0.00, 0.00, 1.18],    # spine2
    [0.00, 0.105, 0.09],   # left_ankle
    [0.00, -0.105, 0.09],  # right_ankle
    [0.00, 0.00, 1.30],    # spine3
    [0.13, 0.11, 0.03],    # left_foot
    [0.13, -0.11, 0.03],   # right_foot
    [0.00, 0.00, 1.47],    # neck
    [0.00, 0.07, 1.42],    # left_collar
    [0.00, -0.07, 1.42],   # right_collar
    [0.00, 0.00, 1.56],    # head
    [0.00, 0.17, 1.44],    # left_shoulder
    [0.00, -0.17, 1.44],   # right_shoulder
    [0.00, 0.26, 1.22],    # left_elbow
    [0.00, -0.26, 1.22],   # right_elbow
    [0.00, 0.30, 1.00],    # left_wrist
    [0.00, -0.30, 1.00],   # right_wrist
])

# Extra segments past leaf joints so heads, hands, and toes have volume.
_TIP_SEGMENTS = (
    (15, np.array([0.0, 0.0, 1.72])),     # head -> crown
    (20, np.array([0.0, 0.32, 0.88])),    # left wrist -> hand
    (21, np.array([0.0, -0.32, 0.88])),   # right wrist -> hand
    (10, np.array([0.21, 0.11, 0.025])),  # left foot -> toes
    (11, np.array([0.21, -0.11, 0.025])),
)

_BONE_RADII = {
    "torso": 0.11, "neck": 0.05, "skull": 0.085, "pelvis_side": 0.08,
    "thigh": 0.07, "calf": 0.055, "foot": 0.045, "toe": 0.035,
    "collar": 0.05, "upper_arm": 0.045, "forearm": 0.04, "hand": 0.038,
}


def _bone_table():
    """(owner_joint, start, end, radius) per capsule segment."""
    def radius_for(child: int) -> float:
        name = JOINT_NAMES[child]
        if "hip" in name:
            return _BONE_RADII["pelvis_side"]
        if "knee" in name:
            return _BONE_RADII["thigh"]
        if "ankle" in name:
            return _BONE_RADII["calf"]
        if "foot" in name:
            return _BONE_RADII["foot"]
        if "collar" in name:
            return _BONE_RADII["collar"]
        if "shoulder" in name:
            return _BONE_RADII["collar"]
        if "elbow" in name:
            return _BONE_RADII["upper_arm"]
        if "wrist" in name:
            return _BONE_RADII["forearm"]
        if name == "neck":
            return _BONE_RADII["neck"]
        if name == "head":
            return _BONE_RADII["neck"]
        return _BONE_RADII["torso"]

    bones = []
    for child in range(1, len(JOINT_NAMES)):
        parent = PARENTS[child]
        bones.append((
            int(parent),
            JOINT_POSITIONS[parent].copy(),
            JOINT_POSITIONS[child].copy(),
            radius_for(child),
        ))
    for owner, tip in _TIP_SEGMENTS:
        name = JOINT_NAMES[owner]
        if name == "head":
            r = _BONE_RADII["skull"]
        elif "wrist" in name:
            r = _BONE_RADII["hand"]
        else:
            r = _BONE_RADII["toe"]
        bones.append((owner, JOINT_POSITIONS[owner].copy(), tip.copy(), r))
    return bones


def _segment_distances(points: np.ndarray, starts, ends) -> np.ndarray:
    """Point-to-segment distances, (M, B)."""
    p = points[:, None, :]
    a = starts[None, :, :]
    axis = ends - starts
    t = np.einsum("mbk,bk->mb", p - a, axis)
    t /= np.maximum(np.einsum("bk,bk->b", axis, axis), 1e-12)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, :, None] * axis[None, :, :]
    return np.linalg.norm(p - closest, axis=2)


def capsule_union_sdf(points: np.ndarray) -> np.ndarray:
    """Exact signed distance to the union of the body's capsules."""
    bones = _bone_table()
    starts = np.array([b[1] for b in bones])
    ends = np.array([b[2] for b in bones])
    radii = np.array([b[3] for b in bones])
    d = _segment_distances(np.atleast_2d(points), starts, ends)
    return (d - radii).min(axis=1)


_CORNER_OFFSETS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
])

# Local edge -> (axis, lower-corner offset) for global deduplication.
_EDGE_CANON = (
    (0, (0, 0, 0)), (1, (1, 0, 0)), (0, (0, 1, 0)), (1, (0, 0, 0)),
    (0, (0, 0, 1)), (1, (1, 0, 1)), (0, (0, 1, 1)), (1, (0, 0, 1)),
    (2, (0, 0, 0)), (2, (1, 0, 0)), (2, (1, 1, 0)), (2, (0, 1, 0)),
)
_EDGE_CORNERS = (
    (0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


def marching_cubes(values: np.ndarray, origin: np.ndarray, h: float) -> TriangleMesh:
    """Extract the zero isosurface of a sampled scalar field.

    Negative values are inside. Produces a watertight mesh with vertices
    deduplicated on shared cell edges.
    """
    nx, ny, nz = values.shape
    inside = (values < 0.0).astype(np.int32)
    cube_idx = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int32)
    for bit, (dx, dy, dz) in enumerate(_CORNER_OFFSETS):
        cube_idx |= inside[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz] << bit
    active = np.argwhere((cube_idx != 0) & (cube_idx != 255))

    verts: list[np.ndarray] = []
    vmap: dict[tuple[int, int, int, int], int] = {}
    faces: list[list[int]] = []
    for ix, iy, iz in active:
        config = cube_idx[ix, iy, iz]
        edges_mask = int(EDGE_TABLE[config])
        local = {}
        for e in range(12):
            if not edges_mask & (1 << e):
                continue
            axis, (dx, dy, dz) = _EDGE_CANON[e]
            key = (ix + dx, iy + dy, iz + dz, axis)
            if key not in vmap:
                c1, c2 = _EDGE_CORNERS[e]
                p1 = origin + (np.array([ix, iy, iz]) + _CORNER_OFFSETS[c1]) * h
                v1 = values[ix + _CORNER_OFFSETS[c1][0],
                            iy + _CORNER_OFFSETS[c1][1],
                            iz + _CORNER_OFFSETS[c1][2]]
                p2 = origin + (np.array([ix, iy, iz]) + _CORNER_OFFSETS[c2]) * h
                v2 = values[ix + _CORNER_OFFSETS[c2][0],
                            iy + _CORNER_OFFSETS[c2][1],
                            iz + _CORNER_OFFSETS[c2][2]]
                t = 0.5 if abs(v1 - v2) < 1e-12 else float(v1 / (v1 - v2))
                vmap[key] = len(verts)
                verts.append(p1 + np.clip(t, 0.0, 1.0) * (p2 - p1))
            local[e] = vmap[key]
        row = TRI_TABLE[config]
        for k in range(0, 16, 3):
            if row[k] < 0:
                break
            faces.append([local[row[k]], local[row[k + 1]], local[row[k + 2]]])

    mesh = TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))
    tri = mesh.triangles()
    volume = np.einsum("fk,fk->f", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6
    if volume < 0:  # table winding convention check
        mesh = TriangleMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def _skinning_weights(vertices: np.ndarray, blend: float = 0.05) -> np.ndarray:
    bones = _bone_table()
    starts = np.array([b[1] for b in bones])
    ends = np.array([b[2] for b in bones])
    radii = np.array([b[3] for b in bones])
    owners = np.array([b[0] for b in bones])
    seg_d = _segment_distances(vertices, starts, ends)
    surf_d = np.maximum(seg_d - radii, 0.0)

    n_joints = len(JOINT_NAMES)
    joint_d = np.full((len(vertices), n_joints), np.inf)
    for b, owner in enumerate(owners):
        joint_d[:, owner] = np.minimum(joint_d[:, owner], surf_d[:, b])

    d_min = joint_d.min(axis=1, keepdims=True)
    support = joint_d <= d_min + blend
    raw = np.where(support, 1.0 / (joint_d + 0.015) ** 4, 0.0)
    return raw / raw.sum(axis=1, keepdims=True)


def _joint_regressor(vertices: np.ndarray, k: int = 32) -> np.ndarray:
    """Convex weights over nearby surface vertices reproducing each joint.

    Solved as non-negative least squares with a strongly weighted
    sum-to-one row, then renormalized exactly.
    """
    from scipy.optimize import nnls

    tree = cKDTree(vertices)
    regressor = np.zeros((len(JOINT_POSITIONS), len(vertices)))
    for j, pos in enumerate(JOINT_POSITIONS):
        _, idx = tree.query(pos, k=k)
        a = np.vstack([vertices[idx].T, 10.0 * np.ones(k)])
        b = np.append(pos, 10.0)
        w, _ = nnls(a, b)
        if w.sum() <= 0:
            w = np.ones(k)
        regressor[j, idx] = w / w.sum()
    return regressor


def sample_interior(
    mesh_vertices: np.ndarray, count: int, seed: int, margin: float = 0.008
) -> tuple[np.ndarray, np.ndarray]:
    """Canonical interior samples: (attachment vertex index, offset) pairs.

    Points are drawn strictly inside the analytic capsule union and tied to
    their nearest template vertex so posing can transport them with that
    vertex's blend transform.
    """
    rng = np.random.default_rng(seed)
    lo = JOINT_POSITIONS.min(axis=0) - 0.2
    hi = JOINT_POSITIONS.max(axis=0) + 0.2
    points = []
    while sum(len(p) for p in points) < count:
        cand = rng.uniform(lo, hi, size=(count * 4, 3))
        keep = capsule_union_sdf(cand) < -margin
        points.append(cand[keep])
    interior = np.concatenate(points)[:count]
    tree = cKDTree(mesh_vertices)
    _, attach = tree.query(interior)
    offsets = interior - mesh_vertices[attach]
    return attach.astype(np.int64), offsets


def capsule_template_mesh(voxel: float = 0.0375) -> TriangleMesh:
    """Marching-cubes template surface of the capsule union."""
    lo = JOINT_POSITIONS.min(axis=0) - 0.16
    hi = JOINT_POSITIONS.max(axis=0) + 0.16
    dims = np.ceil((hi - lo) / voxel).astype(int) + 1
    axes = [lo[i] + voxel * np.arange(dims[i]) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    values = capsule_union_sdf(pts).reshape(dims)
    return marching_cubes(values, lo, voxel)


def build_capsule_body(
    simplified_count: int = 655,
    spiral_length: int = 9,
    interior_count: int = 2000,
    seed: int = 20240501,
    voxel: float = 0.0375,
):
    """Assemble the full synthetic body asset (template through spiral table)."""
    from scene_placer.body.model import ArticulatedBody
    from scene_placer.body.simplify import build_simplified_mapping, spiral_table

    mesh = capsule_template_mesh(voxel)
    weights = _skinning_weights(mesh.vertices)
    regressor = _joint_regressor(mesh.vertices)
    attach, offsets = sample_interior(mesh.vertices, interior_count, seed)
    mapping = build_simplified_mapping(mesh, simplified_count)
    spirals = spiral_table(
        mapping.simplified_faces, simplified_count, spiral_length
    )
    return ArticulatedBody(
        template_vertices=mesh.vertices,
        faces=mesh.faces,
        parent=PARENTS.copy(),
        joint_names=list(JOINT_NAMES),
        joint_regressor=regressor,
        skinning_weights=weights,
        downsample=mapping.downsample,
        upsample=mapping.upsample,
        simplified_faces=mapping.simplified_faces,
        spiral_indices=spirals,
        interior_attach=attach,
        interior_offsets=offsets,
    )
