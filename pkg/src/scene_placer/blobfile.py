"""Shared on-disk container: one JSON header line plus raw little-endian
array blobs in header order. Used by body assets, network checkpoints, and
training corpora. Writing is deterministic for identical inputs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_FLOAT = "<f4"
_INT = "<i4"


def write_blob(
    path: str | Path, fmt: str, meta: dict, arrays: dict[str, np.ndarray]
) -> None:
    entries = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = _INT if np.issubdtype(arr.dtype, np.integer) else _FLOAT
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr.astype(dtype)).tobytes())
    header = {"format": fmt, "meta": meta, "arrays": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for blob in payloads:
            fh.write(blob)


def read_blob(path: str | Path, fmt: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a blob container: {exc}") from exc
        if header.get("format") != fmt:
            raise ValueError(
                f"{path}: expected format '{fmt}', found '{header.get('format')}'"
            )
        arrays = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = fh.read(count * np.dtype(entry["dtype"]).itemsize)
            if len(raw) != count * np.dtype(entry["dtype"]).itemsize:
                raise ValueError(f"{path}: truncated array '{entry['name']}'")
            arrays[entry["name"]] = np.frombuffer(
                raw, dtype=entry["dtype"]
            ).reshape(entry["shape"]).copy()
    return header["meta"], arrays
