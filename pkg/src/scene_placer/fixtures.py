"""Procedural primitive solids and desk-scale demo scenes.

All primitives are watertight with outward-oriented faces, which the
winding-number sign conventions rely on. The demo scenes double as test
fixtures and as ready-made inputs for the command-line pipeline.
"""

from __future__ import annotations

import numpy as np

from scene_placer.geometry.mesh import TriangleMesh
from scene_placer.scene import DEFAULT_CATEGORIES, Scene


def _quads_to_faces(quads: list[tuple[int, int, int, int]]) -> list[list[int]]:
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return faces


def box_mesh(center, size) -> TriangleMesh:
    """Axis-aligned solid box. ``size`` is the full extent per axis."""
    center = np.asarray(center, dtype=np.float64)
    half = np.asarray(size, dtype=np.float64) / 2.0
    corners = np.array(
        [[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)],
        dtype=np.float64,
    )
    vertices = center + corners * half
    quads = [
        (1, 5, 7, 3),  # +z
        (0, 2, 6, 4),  # -z
        (4, 6, 7, 5),  # +x
        (0, 1, 3, 2),  # -x
        (2, 3, 7, 6),  # +y
        (0, 4, 5, 1),  # -y
    ]
    return TriangleMesh(vertices, _quads_to_faces(quads))


def icosphere(radius: float, center=(0.0, 0.0, 0.0), subdivisions: int = 3) -> TriangleMesh:
    """Subdivided icosahedron projected onto a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        faces = [
            tri
            for a, b, c in faces
            for tri in [
                (a, midpoint(a, b), midpoint(a, c)),
                (b, midpoint(b, c), midpoint(a, b)),
                (c, midpoint(a, c), midpoint(b, c)),
                (midpoint(a, b), midpoint(b, c), midpoint(a, c)),
            ]
        ]
    vertices = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(vertices, np.array(faces))


def cylinder_mesh(p0, p1, radius: float, segments: int = 16,
                  rings: int = 1) -> TriangleMesh:
    """Capped cylinder from p0 to p1 with ``rings`` axial subdivisions.

    Axial rings matter when the mesh is probed per-vertex (a shaft with
    end-only vertices never samples what it passes through)."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    t = p1 - p0
    length = np.linalg.norm(t)
    if length <= 0:
        raise ValueError("cylinder endpoints coincide")
    t = t / length
    u = np.cross(t, [0.0, 0.0, 1.0])
    if np.linalg.norm(u) < 1e-8:
        u = np.cross(t, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(t, u)

    theta = 2.0 * np.pi * np.arange(segments) / segments
    radial = np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v
    levels = [p0 + frac * (p1 - p0) for frac in np.linspace(0.0, 1.0, rings + 1)]
    ring_verts = [center + radius * radial for center in levels]
    vertices = np.vstack(ring_verts + [p0[None], p1[None]])
    c0 = (rings + 1) * segments
    c1 = c0 + 1

    faces = []
    for level in range(rings):
        base0 = level * segments
        base1 = (level + 1) * segments
        for i in range(segments):
            j = (i + 1) % segments
            faces += [[base0 + i, base0 + j, base1 + j],
                      [base0 + i, base1 + j, base1 + i]]
    last = rings * segments
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[c0, j, i], [c1, last + i, last + j]]
    return TriangleMesh(vertices, np.array(faces))


def torus_mesh(
    major_radius: float, minor_radius: float, center=(0.0, 0.0, 0.0),
    segments_major: int = 32, segments_minor: int = 16,
) -> TriangleMesh:
    """Watertight torus around the z axis."""
    center = np.asarray(center, dtype=np.float64)
    iu, iv = np.meshgrid(np.arange(segments_major), np.arange(segments_minor),
                         indexing="ij")
    theta = 2.0 * np.pi * iu / segments_major
    phi = 2.0 * np.pi * iv / segments_minor
    ring = major_radius + minor_radius * np.cos(phi)
    vertices = np.stack(
        [ring * np.cos(theta), ring * np.sin(theta), minor_radius * np.sin(phi)],
        axis=-1,
    ).reshape(-1, 3) + center

    def vid(a, b):
        return (a % segments_major) * segments_minor + (b % segments_minor)

    quads = [
        (vid(a, b), vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1))
        for a in range(segments_major)
        for b in range(segments_minor)
    ]
    return TriangleMesh(vertices, _quads_to_faces(quads))


def merge_labeled(parts: list[tuple[TriangleMesh, int, int]]) -> TriangleMesh:
    """Concatenate meshes, labeling each part's faces (category, instance)."""
    vertices, faces, labels = [], [], []
    offset = 0
    for mesh, category, instance in parts:
        vertices.append(mesh.vertices)
        faces.append(mesh.faces + offset)
        labels.append(np.tile([category, instance], (mesh.face_count, 1)))
        offset += mesh.vertex_count
    return TriangleMesh(
        np.vstack(vertices), np.vstack(faces), np.vstack(labels)
    )


_CAT = {name: i for i, name in enumerate(DEFAULT_CATEGORIES)}


def chair_mesh(center_xy=(0.0, 0.0), seat_height: float = 0.45,
               seat_size: float = 0.45, back_height: float = 1.0,
               back_thickness: float = 0.08) -> TriangleMesh:
    """Chair with a deliberately thin back (thorough-penetration bait).

    Plate thicknesses stay above the default 0.05 m SDF voxel so grid
    centers sample plate interiors.
    """
    cx, cy = center_xy
    half = seat_size / 2.0
    seat_thickness = 0.07
    parts = [
        box_mesh((cx, cy, seat_height - seat_thickness / 2.0),
                 (seat_size, seat_size, seat_thickness)),
        box_mesh(
            (cx, cy + half - back_thickness / 2.0,
             seat_height + (back_height - seat_height) / 2.0),
            (seat_size, back_thickness, back_height - seat_height),
        ),
    ]
    leg = 0.06
    for sx in (-1, 1):
        for sy in (-1, 1):
            parts.append(box_mesh(
                (cx + sx * (half - leg / 2), cy + sy * (half - leg / 2),
                 (seat_height - seat_thickness) / 2.0),
                (leg, leg, seat_height - seat_thickness),
            ))
    merged = merge_labeled([(p, 0, 0) for p in parts])
    return TriangleMesh(merged.vertices, merged.faces)


def table_mesh(center_xy=(0.0, 0.0), top_height: float = 0.72,
               top_size=(1.2, 0.8)) -> TriangleMesh:
    cx, cy = center_xy
    sx, sy = top_size
    parts = [box_mesh((cx, cy, top_height - 0.035), (sx, sy, 0.07))]
    leg = 0.05
    for dx in (-1, 1):
        for dy in (-1, 1):
            parts.append(box_mesh(
                (cx + dx * (sx / 2 - leg), cy + dy * (sy / 2 - leg),
                 (top_height - 0.05) / 2.0),
                (leg, leg, top_height - 0.05),
            ))
    merged = merge_labeled([(p, 0, 0) for p in parts])
    return TriangleMesh(merged.vertices, merged.faces)


def fixture_room(extra_chair: bool = False) -> Scene:
    """Floor + chair + table demo room (desk-scale stand/sit playground).

    Instance ids: 0 floor, 1 chair, 2 table, 3 optional second chair.
    """
    parts = [
        (box_mesh((0.0, 0.0, -0.05), (4.0, 4.0, 0.1)), _CAT["floor"], 0),
        (chair_mesh((1.0, 0.0)), _CAT["chair"], 1),
        (table_mesh((-1.0, 0.5)), _CAT["table"], 2),
    ]
    if extra_chair:
        parts.append((chair_mesh((1.0, -1.2)), _CAT["chair"], 3))
    mesh = merge_labeled(parts)
    return Scene(mesh)


def thin_wall_scene(
    wall_thickness: float = 0.08, wall_height: float = 1.2, wall_width: float = 1.6,
) -> Scene:
    """Floor plus a free-standing thin wall (instance 1) for penetration tests."""
    parts = [
        (box_mesh((0.0, 0.0, -0.05), (3.0, 3.0, 0.1)), _CAT["floor"], 0),
        (box_mesh((0.0, 0.0, wall_height / 2.0),
                  (wall_width, wall_thickness, wall_height)), _CAT["wall"], 1),
    ]
    return Scene(merge_labeled(parts))


def single_box_scene(category: str = "table", size=(1.0, 1.0, 0.7)) -> Scene:
    """A lone box of the given category resting on a floor slab."""
    sx, sy, sz = size
    parts = [
        (box_mesh((0.0, 0.0, -0.05), (3.0, 3.0, 0.1)), _CAT["floor"], 0),
        (box_mesh((0.0, 0.0, sz / 2.0), (sx, sy, sz)), _CAT[category], 1),
    ]
    return Scene(merge_labeled(parts))
