"""Body asset file (.spbody): JSON header plus f32/i32 array blobs, with the
simplified-mesh mappings stored in CSR layout."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import sparse

from scene_placer.blobfile import read_blob, write_blob
from scene_placer.body.model import ArticulatedBody

FORMAT = "SPBODY1"


def _csr_arrays(prefix: str, mat: sparse.csr_matrix) -> dict[str, np.ndarray]:
    mat = mat.tocsr()
    return {
        f"{prefix}_data": mat.data,
        f"{prefix}_indices": mat.indices.astype(np.int64),
        f"{prefix}_indptr": mat.indptr.astype(np.int64),
    }


def _csr_from_arrays(prefix: str, arrays: dict, shape) -> sparse.csr_matrix:
    return sparse.csr_matrix(
        (
            arrays[f"{prefix}_data"].astype(np.float64),
            arrays[f"{prefix}_indices"],
            arrays[f"{prefix}_indptr"],
        ),
        shape=shape,
    )


def save_body_asset(body: ArticulatedBody, path: str | Path) -> None:
    arrays = {
        "template_vertices": body.template_vertices,
        "faces": body.faces,
        "parent": body.parent,
        "joint_regressor": body.joint_regressor,
        "skinning_weights": body.skinning_weights,
        "simplified_faces": body.simplified_faces,
        "spiral_indices": body.spiral_indices,
    }
    arrays.update(_csr_arrays("downsample", body.downsample))
    arrays.update(_csr_arrays("upsample", body.upsample))
    if body.interior_attach is not None:
        arrays["interior_attach"] = body.interior_attach
        arrays["interior_offsets"] = body.interior_offsets
    meta = {
        "joint_names": list(body.joint_names),
        "vertex_count": body.vertex_count,
        "joint_count": body.joint_count,
        "simplified_count": body.simplified_count,
        "spiral_length": int(body.spiral_indices.shape[1]),
    }
    write_blob(path, FORMAT, meta, arrays)


def load_body_asset(path: str | Path) -> ArticulatedBody:
    meta, arrays = read_blob(path, FORMAT)
    n = meta["vertex_count"]
    s = meta["simplified_count"]
    return ArticulatedBody(
        template_vertices=arrays["template_vertices"].astype(np.float64),
        faces=arrays["faces"].astype(np.int64),
        parent=arrays["parent"].astype(np.int64),
        joint_names=list(meta["joint_names"]),
        joint_regressor=arrays["joint_regressor"].astype(np.float64),
        skinning_weights=arrays["skinning_weights"].astype(np.float64),
        downsample=_csr_from_arrays("downsample", arrays, (s, n)),
        upsample=_csr_from_arrays("upsample", arrays, (n, s)),
        simplified_faces=arrays["simplified_faces"].astype(np.int64),
        spiral_indices=arrays["spiral_indices"].astype(np.int64),
        interior_attach=(
            arrays["interior_attach"].astype(np.int64)
            if "interior_attach" in arrays else None
        ),
        interior_offsets=(
            arrays["interior_offsets"].astype(np.float64)
            if "interior_offsets" in arrays else None
        ),
    )
