"""Synthetic training corpora: procedural pose families per action, and
contact records labeled against the demo scenes."""

from __future__ import annotations

import numpy as np

from scene_placer.blobfile import read_blob, write_blob
from scene_placer.body.model import ArticulatedBody, PoseVector, pose_body
from scene_placer.generators.losses import contact_labels
from scene_placer.scene import Scene

CORPUS_FORMAT = "SPCORPUS1"

# Joint indices into the 22-joint skeleton (theta covers joints 1..21).
_L_HIP, _R_HIP, _SPINE1 = 1, 2, 3
_L_KNEE, _R_KNEE, _SPINE2 = 4, 5, 6
_L_ANKLE, _R_ANKLE, _SPINE3 = 7, 8, 9
_NECK = 12
_L_SHOULDER, _R_SHOULDER = 16, 17
_L_ELBOW, _R_ELBOW = 18, 19


def _set(theta: np.ndarray, joint: int, vec) -> None:
    theta[3 * (joint - 1): 3 * joint] = vec


def _clip_norms(theta: np.ndarray, cap: float = 2.8) -> np.ndarray:
    aa = theta.reshape(-1, 3)
    norms = np.linalg.norm(aa, axis=1)
    scale = np.where(norms > cap, cap / np.maximum(norms, 1e-9), 1.0)
    return (aa * scale[:, None]).reshape(-1)


def sample_pose(
    action: str, rng: np.random.Generator, jitter: float = 1.0
) -> np.ndarray:
    """One pose from the procedural family for an action.

    The root stays upright (yaw handled downstream), so "lie" is realized
    as a full recline: legs horizontal, torso leaned far back. ``jitter``
    scales the random variation around the family's structural angles (the
    contact corpus uses a tight setting so per-vertex labels stay
    consistent across records).
    """
    j = jitter
    theta = rng.normal(0.0, 0.03 * j, 63)
    if action == "stand":
        bend = rng.uniform(0.0, 0.18 * j)
        _set(theta, _L_KNEE, [0, bend, 0] + rng.normal(0, 0.03 * j, 3))
        _set(theta, _R_KNEE, [0, bend, 0] + rng.normal(0, 0.03 * j, 3))
        theta[3 * (_L_SHOULDER - 1): 3 * _R_ELBOW] += rng.normal(0, 0.1 * j, 12)
    elif action == "sit":
        hip = -np.pi / 2 + rng.normal(0, 0.1 * j)
        knee = np.pi / 2 * (1.0 + rng.uniform(-0.15 * j, 0.02 * j))
        _set(theta, _L_HIP, [0, hip, 0] + rng.normal(0, 0.05 * j, 3))
        _set(theta, _R_HIP, [0, hip, 0] + rng.normal(0, 0.05 * j, 3))
        _set(theta, _L_KNEE, [0, knee, 0] + rng.normal(0, 0.04 * j, 3))
        _set(theta, _R_KNEE, [0, knee, 0] + rng.normal(0, 0.04 * j, 3))
        _set(theta, _SPINE1, [0, rng.normal(0.05, 0.08 * j), 0])
        theta[3 * (_L_SHOULDER - 1): 3 * _R_ELBOW] += rng.normal(0, 0.12 * j, 12)
    elif action == "lie":
        hip = -np.pi / 2 + rng.normal(0, 0.08 * j)
        _set(theta, _L_HIP, [0, hip, 0] + rng.normal(0, 0.04 * j, 3))
        _set(theta, _R_HIP, [0, hip, 0] + rng.normal(0, 0.04 * j, 3))
        _set(theta, _L_KNEE, [0, abs(rng.normal(0.12, 0.1 * j)), 0])
        _set(theta, _R_KNEE, [0, abs(rng.normal(0.12, 0.1 * j)), 0])
        for spine in (_SPINE1, _SPINE2, _SPINE3):
            _set(theta, spine, [0, rng.normal(-0.38, 0.05 * j), 0])
        _set(theta, _NECK, [0, rng.normal(-0.12, 0.05 * j), 0])
        theta[3 * (_L_SHOULDER - 1): 3 * _R_ELBOW] += rng.normal(0, 0.08 * j, 12)
    else:
        raise ValueError(f"unknown action '{action}'")
    return _clip_norms(theta)


def make_pose_corpus(
    per_action: int, seed: int, actions=("stand", "sit", "lie")
) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    thetas = []
    labels = []
    for a_id, action in enumerate(actions):
        for _ in range(per_action):
            thetas.append(sample_pose(action, rng))
            labels.append(a_id)
    return {
        "theta": np.array(thetas),
        "action": np.array(labels, dtype=np.int64),
    }


def _support_vertices(body: ArticulatedBody, joints: tuple[int, ...]) -> np.ndarray:
    """Vertices whose dominant skinning joint is in the given set."""
    dominant = body.skinning_weights.argmax(axis=1)
    return np.isin(dominant, joints)


def _place_record(
    body: ArticulatedBody,
    theta: np.ndarray,
    yaw: float,
    target_xy: np.ndarray,
    support_joints: tuple[int, ...],
    support_height: float,
    hover: float,
):
    """Pose in scene frame: support region rested on the given height."""
    posed_local = pose_body(body, PoseVector(theta, yaw, np.zeros(3)))
    mask = _support_vertices(body, support_joints)
    z_min = posed_local.vertices[mask, 2].min()
    translation = np.array([
        target_xy[0], target_xy[1], support_height - z_min + hover,
    ])
    return pose_body(body, PoseVector(theta, yaw, translation))


def make_contact_corpus(
    body: ArticulatedBody,
    scene: Scene,
    per_combo: int,
    seed: int,
    delta: float = 0.05,
    jitter: float = 0.3,
) -> dict[str, np.ndarray]:
    """Contact records on the demo room: sit@chair, stand@floor, lie@table.

    Each record carries the label on the simplified vertices, the
    simplified body-local geometry, the object category id, and the action.
    Pose jitter stays tight so the contact patch is stable per vertex.
    """
    rng = np.random.default_rng(seed)
    legs = (_L_KNEE, _R_KNEE, _L_ANKLE, _R_ANKLE, 10, 11)
    seatings = (0, _L_HIP, _R_HIP)
    back = (0, _L_HIP, _R_HIP, _SPINE1, _SPINE2)

    combos = [
        ("stand", "floor", legs, 0.0, None),
        ("sit", "chair", seatings, 0.45, np.array([1.0, 0.0])),
        ("lie", "table", back, 0.72, np.array([-1.0, 0.5])),
    ]
    records = {"f": [], "vs": [], "object": [], "action": []}
    for a_id, (action, category, joints, height, center) in enumerate(combos):
        cat_id = scene.category_id(category)
        if cat_id is None:
            raise ValueError(f"scene lacks category '{category}'")
        for _ in range(per_combo):
            theta = sample_pose(action, rng, jitter=jitter)
            if center is None:
                xy = rng.uniform([-1.6, -1.7], [1.6, -0.8])
                yaw = rng.uniform(0, 2 * np.pi)
            else:
                xy = center + rng.normal(0, 0.02, 2)
                yaw = -np.pi / 2 + rng.normal(0, 0.05)
            posed = _place_record(
                body, theta, yaw, xy, joints, height, rng.uniform(0.0, 0.002)
            )
            simplified_scene = body.downsample @ posed.vertices
            f = contact_labels(simplified_scene, scene, delta)
            local = pose_body(body, PoseVector(theta))
            records["f"].append(f)
            records["vs"].append(body.downsample @ local.vertices)
            records["object"].append(cat_id)
            records["action"].append(a_id)
    return {
        "f": np.array(records["f"]),
        "vs": np.array(records["vs"]),
        "object": np.array(records["object"], dtype=np.int64),
        "action": np.array(records["action"], dtype=np.int64),
    }


def save_pose_corpus(path, corpus: dict) -> None:
    write_blob(path, CORPUS_FORMAT, {"kind": "pose", "count": len(corpus["theta"])},
               {"theta": corpus["theta"], "action": corpus["action"]})


def load_pose_corpus(path) -> dict[str, np.ndarray]:
    meta, arrays = read_blob(path, CORPUS_FORMAT)
    if meta.get("kind") != "pose":
        raise ValueError(f"{path}: not a pose corpus")
    return {
        "theta": arrays["theta"].astype(np.float64),
        "action": arrays["action"].astype(np.int64),
    }


def save_contact_corpus(path, corpus: dict) -> None:
    write_blob(
        path, CORPUS_FORMAT, {"kind": "contact", "count": len(corpus["f"])},
        {
            "f": corpus["f"], "vs": corpus["vs"],
            "object": corpus["object"], "action": corpus["action"],
        },
    )


def load_contact_corpus(path) -> dict[str, np.ndarray]:
    meta, arrays = read_blob(path, CORPUS_FORMAT)
    if meta.get("kind") != "contact":
        raise ValueError(f"{path}: not a contact corpus")
    return {
        "f": arrays["f"].astype(np.float64),
        "vs": arrays["vs"].astype(np.float64),
        "object": arrays["object"].astype(np.int64),
        "action": arrays["action"].astype(np.int64),
    }
