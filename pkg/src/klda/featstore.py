"""Feature-file format (KLDF) and dataset manifests.

One KLDF file carries one split of extracted features, byte-exact on every
platform:

    magic 4s "KLDF" | version u32 | n u64 | d u32 | dtype u32
    | payload n*d floats row-major little-endian (dtype 0 = f32, 1 = f64)
    | labels n * i32 little-endian | crc32 u32 over all preceding bytes

so a dtype-0 file is exactly 24 + n*d*4 + n*4 + 4 bytes long. Readers
verify sizes and the CRC before touching the payload; any malformed input
raises a typed error, never a silently truncated batch.

A manifest is a JSON document tying split files to a class table:

    {
      "dataset": str,
      "num_classes": int,
      "class_names": {"<class id>": str, ...},
      "splits": {"train": {"path": str, "rows": int}, "test": {...}},
      "provenance": {"model": str, "pooling": str, "extraction_seed": int}
    }

Split paths are relative to the manifest's directory. These two formats are
the entire contract between the engine and any feature producer.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _binio
from .batch import FeatureBatch
from .errors import DataError, FormatError, NonFiniteData, TruncatedFile
from ._binio import atomic_write

MAGIC = b"KLDF"
VERSION = 1
HEADER_BYTES = 24

DTYPE_F32 = 0
DTYPE_F64 = 1
_DTYPES = {DTYPE_F32: "<f4", DTYPE_F64: "<f8"}


def encode_features(batch: FeatureBatch, dtype_code: int = DTYPE_F32) -> bytes:
    if dtype_code not in _DTYPES:
        raise FormatError(f"unknown dtype code {dtype_code}")
    if batch.labels.size and batch.labels.max() > np.iinfo(np.int32).max:
        raise DataError("labels exceed 32-bit range")
    n, d = batch.values.shape
    header = MAGIC + struct.pack("<IQII", VERSION, n, d, dtype_code)
    payload = np.ascontiguousarray(batch.values, dtype=_DTYPES[dtype_code]).tobytes()
    labels = np.ascontiguousarray(batch.labels, dtype="<i4").tobytes()
    return _binio.append_crc([header, payload, labels])


def decode_features(buf: bytes) -> tuple[FeatureBatch, int]:
    """Parse one KLDF byte string; returns (batch, dtype code)."""
    offset = _binio.check_header(buf, 0, MAGIC, VERSION)
    _binio.require(buf, offset, 16, "feature header")
    n, d, dtype_code = struct.unpack_from("<QII", buf, offset)
    offset += 16
    if dtype_code not in _DTYPES:
        raise FormatError(f"unknown dtype code {dtype_code}")
    itemsize = 4 if dtype_code == DTYPE_F32 else 8
    expected = HEADER_BYTES + n * d * itemsize + n * 4 + 4
    if len(buf) < expected:
        raise TruncatedFile(f"file needs {expected} bytes, got {len(buf)}")
    if len(buf) > expected:
        raise FormatError(f"file has {len(buf) - expected} trailing bytes")
    _binio.check_crc(buf, 0, expected)
    values = np.frombuffer(buf, dtype=_DTYPES[dtype_code], count=n * d, offset=offset)
    values = values.reshape(n, d).astype(np.float64, copy=True)
    offset += n * d * itemsize
    labels = np.frombuffer(buf, dtype="<i4", count=n, offset=offset).astype(np.int64)
    if values.size and not np.isfinite(values).all():
        raise NonFiniteData("payload contains NaN/Inf values")
    if labels.size and labels.min() < 0:
        raise FormatError("negative label in feature file")
    return FeatureBatch(values, labels), dtype_code


def write_features(batch: FeatureBatch, path, dtype_code: int = DTYPE_F32) -> None:
    """Write a batch; 32-bit payload by default, staged and atomically renamed."""
    atomic_write(path, encode_features(batch, dtype_code))


def read_features(path) -> FeatureBatch:
    with open(path, "rb") as fh:
        batch, _ = decode_features(fh.read())
    return batch


def expected_file_size(n: int, d: int, dtype_code: int = DTYPE_F32) -> int:
    itemsize = 4 if dtype_code == DTYPE_F32 else 8
    return HEADER_BYTES + n * d * itemsize + n * 4 + 4


# --- manifests ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitRef:
    path: str
    rows: int


@dataclass(frozen=True)
class DatasetManifest:
    dataset: str
    num_classes: int
    class_names: dict[int, str]
    splits: dict[str, SplitRef]
    provenance: dict = field(default_factory=dict)
    base_dir: str = "."

    def split_path(self, split: str) -> str:
        if split not in self.splits:
            raise FormatError(f"manifest has no split {split!r}")
        return os.path.join(self.base_dir, self.splits[split].path)

    def to_json(self) -> str:
        doc = {
            "dataset": self.dataset,
            "num_classes": self.num_classes,
            "class_names": {str(k): v for k, v in sorted(self.class_names.items())},
            "splits": {
                name: {"path": ref.path, "rows": ref.rows} for name, ref in self.splits.items()
            },
            "provenance": self.provenance,
        }
        return json.dumps(doc, indent=2) + "\n"


def save_manifest(manifest: DatasetManifest, path) -> None:
    atomic_write(path, manifest.to_json().encode("utf-8"))


def load_manifest(path) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        dataset = doc["dataset"]
        num_classes = int(doc["num_classes"])
        class_names = {int(k): str(v) for k, v in doc["class_names"].items()}
        splits = {
            name: SplitRef(path=str(ref["path"]), rows=int(ref["rows"]))
            for name, ref in doc["splits"].items()
        }
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable manifest {path}: {exc}") from exc
    return DatasetManifest(
        dataset=dataset,
        num_classes=num_classes,
        class_names=class_names,
        splits=splits,
        provenance=doc.get("provenance", {}),
        base_dir=os.path.dirname(os.fspath(path)) or ".",
    )


def load_split(manifest_path, split: str) -> FeatureBatch:
    manifest = load_manifest(manifest_path)
    return read_features(manifest.split_path(split))


def validate_manifest(manifest: DatasetManifest | str | os.PathLike) -> list[str]:
    """Cross-check a manifest against its files; returns violations (empty = valid)."""
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    problems: list[str] = []
    if manifest.num_classes != len(manifest.class_names):
        problems.append(
            f"num_classes is {manifest.num_classes} but class table has {len(manifest.class_names)} entries"
        )
    for name, ref in manifest.splits.items():
        path = manifest.split_path(name)
        if not os.path.exists(path):
            problems.append(f"split {name!r}: file {path} does not exist")
            continue
        try:
            batch = read_features(path)
        except FormatError as exc:
            problems.append(f"split {name!r}: unreadable ({type(exc).__name__}: {exc})")
            continue
        if batch.n_rows != ref.rows:
            problems.append(f"split {name!r}: manifest says {ref.rows} rows, file has {batch.n_rows}")
        labels = set(np.unique(batch.labels).tolist())
        out_of_table = labels - set(manifest.class_names)
        if out_of_table:
            problems.append(
                f"split {name!r}: labels {sorted(out_of_table)} missing from the class table"
            )
        out_of_range = {l for l in labels if l >= manifest.num_classes}
        if out_of_range:
            problems.append(
                f"split {name!r}: labels {sorted(out_of_range)} out of range for {manifest.num_classes} classes"
            )
    return problems
