"""Writer side of the engine's wire formats: KLDF feature files + manifests.

Implemented independently of the engine package on purpose; the byte layout
is the contract, and the interop tests read these files back through the
engine to prove it. Layout (little-endian throughout):

    magic "KLDF" | version u32 = 1 | n u64 | d u32 | dtype u32 (0 = f32)
    | payload n*d floats row-major | labels n * i32 | crc32 over all above
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib

import numpy as np

MAGIC = b"KLDF"
VERSION = 1
DTYPE_F32 = 0
DTYPE_F64 = 1


def _atomic_write(path, data: bytes) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_kldf(values: np.ndarray, labels: np.ndarray, dtype_code: int = DTYPE_F32) -> bytes:
    values = np.asarray(values)
    labels = np.asarray(labels)
    if values.ndim != 2 or labels.shape != (values.shape[0],):
        raise ValueError(f"bad shapes: values {values.shape}, labels {labels.shape}")
    if not np.isfinite(values).all():
        raise ValueError("non-finite feature values")
    if labels.size and labels.min() < 0:
        raise ValueError("negative labels")
    np_dtype = "<f4" if dtype_code == DTYPE_F32 else "<f8"
    n, d = values.shape
    body = (
        MAGIC
        + struct.pack("<IQII", VERSION, n, d, dtype_code)
        + np.ascontiguousarray(values, dtype=np_dtype).tobytes()
        + np.ascontiguousarray(labels, dtype="<i4").tobytes()
    )
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def write_kldf(values, labels, path, dtype_code: int = DTYPE_F32) -> None:
    _atomic_write(path, encode_kldf(values, labels, dtype_code))


def write_manifest(
    path,
    dataset: str,
    class_names: dict[int, str],
    splits: dict[str, tuple[str, int]],
    provenance: dict,
) -> None:
    doc = {
        "dataset": dataset,
        "num_classes": len(class_names),
        "class_names": {str(k): v for k, v in sorted(class_names.items())},
        "splits": {name: {"path": rel, "rows": rows} for name, (rel, rows) in splits.items()},
        "provenance": provenance,
    }
    _atomic_write(path, (json.dumps(doc, indent=2) + "\n").encode("utf-8"))
