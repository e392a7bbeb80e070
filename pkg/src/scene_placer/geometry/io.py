"""Mesh file input/output: Wavefront OBJ and binary/ascii PLY."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from scene_placer.geometry.mesh import TriangleMesh


def load_mesh(path: str | Path) -> TriangleMesh:
    """Load a triangle mesh from an .obj or .ply file (by extension)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise ValueError(f"unsupported mesh format '{suffix}' for {path}")


def save_mesh(mesh: TriangleMesh, path: str | Path) -> None:
    """Write a triangle mesh as .obj (ascii) or .ply (binary little-endian)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        _save_obj(mesh, path)
    elif suffix == ".ply":
        _save_ply(mesh, path)
    else:
        raise ValueError(f"unsupported mesh format '{suffix}' for {path}")


def _load_obj(path: Path) -> TriangleMesh:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))


def _save_obj(mesh: TriangleMesh, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        fmt = None
        elements: list[tuple[str, int, list[tuple[str, str, str | None]]]] = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: unexpected end of PLY header")
            tokens = line.decode("ascii").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if tokens[1] == "list":
                    elements[-1][2].append((tokens[4], tokens[3], tokens[2]))
                else:
                    elements[-1][2].append((tokens[2], tokens[1], None))
            elif tokens[0] == "end_header":
                break
        if fmt is None:
            raise ValueError(f"{path}: PLY header missing format line")

        vertices = np.zeros((0, 3))
        faces: list[list[int]] = []
        if fmt == "ascii":
            for name, count, props in elements:
                rows = [fh.readline().decode("ascii").split() for _ in range(count)]
                if name == "vertex":
                    cols = {p[0]: i for i, p in enumerate(props)}
                    vertices = np.array(
                        [[float(r[cols["x"]]), float(r[cols["y"]]), float(r[cols["z"]])]
                         for r in rows]
                    )
                elif name == "face":
                    for r in rows:
                        n = int(r[0])
                        idx = [int(x) for x in r[1:1 + n]]
                        for k in range(1, n - 1):
                            faces.append([idx[0], idx[k], idx[k + 1]])
        elif fmt in ("binary_little_endian", "binary_big_endian"):
            endian = "<" if fmt == "binary_little_endian" else ">"
            for name, count, props in elements:
                if name == "vertex" and all(p[2] is None for p in props):
                    dtype = np.dtype([(p[0], endian + _PLY_DTYPES[p[1]]) for p in props])
                    data = np.frombuffer(fh.read(dtype.itemsize * count), dtype=dtype)
                    vertices = np.stack(
                        [data["x"], data["y"], data["z"]], axis=1
                    ).astype(np.float64)
                elif name == "face":
                    count_t, index_t = None, None
                    for pname, ptype, ltype in props:
                        if pname in ("vertex_indices", "vertex_index"):
                            count_t = endian + _PLY_DTYPES[ltype]
                            index_t = endian + _PLY_DTYPES[ptype]
                    if count_t is None:
                        raise ValueError(f"{path}: face element lacks vertex index list")
                    csize = np.dtype(count_t).itemsize
                    isize = np.dtype(index_t).itemsize
                    for _ in range(count):
                        n = int(np.frombuffer(fh.read(csize), dtype=count_t)[0])
                        idx = np.frombuffer(fh.read(isize * n), dtype=index_t)
                        for k in range(1, n - 1):
                            faces.append([int(idx[0]), int(idx[k]), int(idx[k + 1])])
                else:
                    # Skip unknown fixed-size elements; lists elsewhere unsupported.
                    if any(p[2] is not None for p in props):
                        raise ValueError(f"{path}: unsupported list property in '{name}'")
                    row = sum(np.dtype(endian + _PLY_DTYPES[p[1]]).itemsize for p in props)
                    fh.seek(row * count, 1)
        else:
            raise ValueError(f"{path}: unsupported PLY format '{fmt}'")

    return TriangleMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3))


def _save_ply(mesh: TriangleMesh, path: Path) -> None:
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.vertex_count}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {mesh.face_count}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mesh.vertices.astype("<f4").tobytes())
        for f in mesh.faces:
            fh.write(struct.pack("<Biii", 3, int(f[0]), int(f[1]), int(f[2])))
