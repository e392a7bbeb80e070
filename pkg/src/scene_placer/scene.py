"""Labeled scene container: semantic/instance queries and object point sets."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scene_placer.geometry.mesh import Aabb, TriangleMesh, compute_aabb, sample_surface_points
from scene_placer.geometry.distance import MeshDistanceIndex
from scene_placer.geometry.io import load_mesh
from scene_placer.geometry.sdf import SdfGrid, build_sdf_grid

logger = logging.getLogger(__name__)

# Default 42-slot indoor category vocabulary. Slot order is stable: object
# codes are one-hot over these indices, so reordering invalidates trained
# checkpoints. Replaceable per scene via the labels sidecar.
DEFAULT_CATEGORIES: tuple[str, ...] = (
    "void", "wall", "floor", "chair", "table", "sofa", "bed", "cabinet",
    "door", "window", "bookshelf", "counter", "desk", "shelf", "curtain",
    "pillow", "monitor", "sink", "lamp", "ceiling", "refrigerator", "tv",
    "stool", "cushion", "plant", "bathtub", "toilet", "nightstand",
    "dresser", "ottoman", "bench", "wardrobe", "picture", "mirror", "rug",
    "whiteboard", "clothes", "books", "box", "bag", "appliance", "other",
)

CATEGORY_COUNT = len(DEFAULT_CATEGORIES)


@dataclass
class SceneObject:
    """One labeled instance: its faces, category, and bounding box."""

    instance_id: int
    category_id: int
    category: str
    face_indices: np.ndarray
    aabb: Aabb
    _distance_index: MeshDistanceIndex | None = field(default=None, repr=False)


class Scene:
    """Immutable labeled scene mesh with per-instance object lookup.

    The signed distance grid is built lazily (or attached from a cache) and
    shared by all downstream queries.
    """

    def __init__(
        self,
        mesh: TriangleMesh,
        categories: dict[int, str] | None = None,
        up_axis: np.ndarray | None = None,
    ):
        if mesh.face_labels is None:
            raise ValueError("Scene requires a mesh with per-face labels")
        self.mesh = mesh
        self.categories = dict(categories) if categories else {
            i: name for i, name in enumerate(DEFAULT_CATEGORIES)
        }
        self.up_axis = (
            np.array([0.0, 0.0, 1.0]) if up_axis is None
            else np.asarray(up_axis, dtype=np.float64)
        )
        self.sdf: SdfGrid | None = None
        self._validate()
        self._objects = self._group_instances()
        self._distance_index: MeshDistanceIndex | None = None

    def _validate(self):
        labels = self.mesh.face_labels
        unknown = set(np.unique(labels[:, 0]).tolist()) - set(self.categories)
        if unknown:
            raise ValueError(
                f"labels reference unknown category ids {sorted(unknown)}; "
                f"known ids: {sorted(self.categories)}"
            )
        # Each instance must belong to exactly one category.
        inst_cat: dict[int, int] = {}
        for cat, inst in labels:
            prev = inst_cat.setdefault(int(inst), int(cat))
            if prev != int(cat):
                raise ValueError(
                    f"instance {int(inst)} labeled with categories {prev} and {int(cat)}"
                )

    def _group_instances(self) -> dict[int, SceneObject]:
        labels = self.mesh.face_labels
        objects: dict[int, SceneObject] = {}
        for inst in np.unique(labels[:, 1]):
            faces = np.flatnonzero(labels[:, 1] == inst)
            cat = int(labels[faces[0], 0])
            objects[int(inst)] = SceneObject(
                instance_id=int(inst),
                category_id=cat,
                category=self.categories[cat],
                face_indices=faces,
                aabb=compute_aabb(self.mesh, faces),
            )
        return objects

    @property
    def objects(self) -> list[SceneObject]:
        return [self._objects[k] for k in sorted(self._objects)]

    def category_id(self, name: str) -> int | None:
        for cid, cname in self.categories.items():
            if cname == name:
                return cid
        return None

    def build_sdf(self, voxel_size: float = 0.05, padding: float = 0.2,
                  sign_mode: str = "winding") -> SdfGrid:
        """Build (or rebuild) the scene SDF grid and keep it on the scene."""
        self.sdf = build_sdf_grid(self.mesh, voxel_size, padding, sign_mode)
        return self.sdf

    def require_sdf(self) -> SdfGrid:
        if self.sdf is None:
            raise RuntimeError("scene SDF not built; call build_sdf() or attach a cache")
        return self.sdf

    def distance_index(self) -> MeshDistanceIndex:
        if self._distance_index is None:
            self._distance_index = MeshDistanceIndex(self.mesh)
        return self._distance_index


def query_objects(scene: Scene, category: str) -> list[SceneObject]:
    """All instances of a category, sorted by instance id.

    An unknown category yields an empty list and a warning naming the known
    categories present in the scene.
    """
    present = {obj.category for obj in scene.objects}
    if category not in present:
        logger.warning(
            "no objects of category '%s'; scene contains: %s",
            category, ", ".join(sorted(present)),
        )
        return []
    return [obj for obj in scene.objects if obj.category == category]


def object_points(scene: Scene, obj: SceneObject, count: int, seed: int) -> np.ndarray:
    """Area-weighted surface samples restricted to one object's faces."""
    return sample_surface_points(scene.mesh, obj.face_indices, count, seed)


def object_distance_index(scene: Scene, obj: SceneObject) -> MeshDistanceIndex:
    """Distance index over a single object's faces, cached on the object."""
    if obj._distance_index is None:
        obj._distance_index = MeshDistanceIndex(scene.mesh, obj.face_indices)
    return obj._distance_index


def save_labels(
    path: str | Path,
    face_labels: np.ndarray,
    categories: dict[int, str],
) -> None:
    """Write the JSON labels sidecar next to a mesh file."""
    payload = {
        "categories": {str(k): v for k, v in sorted(categories.items())},
        "faces": [[int(c), int(i)] for c, i in np.asarray(face_labels)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_labels(path: str | Path) -> tuple[np.ndarray, dict[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        categories = {int(k): str(v) for k, v in payload["categories"].items()}
        faces = np.asarray(payload["faces"], dtype=np.int64).reshape(-1, 2)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed labels sidecar: {exc}") from exc
    return faces, categories


def load_scene(mesh_path: str | Path, labels_path: str | Path) -> Scene:
    """Load a mesh plus its labels sidecar into a validated Scene.

    Raises:
        ValueError: when the sidecar face count disagrees with the mesh
            (message carries both counts) or references unknown categories.
    """
    mesh = load_mesh(mesh_path)
    labels, categories = load_labels(labels_path)
    if len(labels) != mesh.face_count:
        raise ValueError(
            f"label count {len(labels)} != mesh face count {mesh.face_count} "
            f"({labels_path} vs {mesh_path})"
        )
    labeled = TriangleMesh(mesh.vertices, mesh.faces, labels)
    return Scene(labeled, categories)
