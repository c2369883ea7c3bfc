"""File formats: the little-endian float32 matrix format and JSON helpers.

Matrix layout: ``<u4 n`` and ``<u4 row_length`` (8 bytes), followed by
``n * row_length`` little-endian float32 values in row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<II")


def as_stored(values: np.ndarray) -> np.ndarray:
    """Round values through float32 so in-memory runs match file-staged runs."""
    return np.asarray(values, dtype="<f4").astype(np.float64)


def write_matrix(path: str | Path, values: np.ndarray, meta: dict | None = None) -> None:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if meta is not None:
        write_json(path.with_suffix(path.suffix + ".json"), meta)


def read_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    n, width = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size != n * width:
        raise ValueError(f"{path}: expected {n * width} values, found {body.size}")
    return body.reshape(n, width).astype(np.float64)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def write_jsonl(path: str | Path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(", ", ": ")) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
