"""Incremental per-class means and one shared covariance matrix.

Training never revisits a class: each class arrives as a single batch, its
mean is taken in feature space, and the pooled covariance is reweighted

    sigma <- (N_prev / N_total) * sigma + (1 / N_total) * scatter(batch)

which after any arrival order equals the batch covariance over all samples
seen so far (the sum over classes of centered scatters divided by the total
count). Accumulation is float64 throughout and the matrix is re-symmetrized
after every update to cancel floating-point drift before the downstream
Cholesky.
"""
from __future__ import annotations

import struct
from typing import NamedTuple

import numpy as np

from . import _binio
from .backends import class_scatter
from .batch import FeatureBatch
from .errors import DataError, DimensionError, ProtocolError, FormatError
from ._binio import atomic_write

MAGIC = b"KACC"
VERSION = 1


class Snapshot(NamedTuple):
    means: dict[int, np.ndarray]
    covariance: np.ndarray
    counts: dict[int, int]


class GaussianAccumulator:
    """Streaming second-order statistics over kernelized features.

    Single-writer: updates require exclusive access; snapshots are safe to
    read concurrently while no update runs.
    """

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise DimensionError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.class_means: dict[int, np.ndarray] = {}
        self.covariance = np.zeros((self.dim, self.dim))
        self.total_count = 0
        self.per_class_counts: dict[int, int] = {}

    @property
    def num_classes(self) -> int:
        return len(self.class_means)

    def class_ids(self) -> list[int]:
        """Observed class ids, ascending."""
        return sorted(self.class_means)

    def update_class(self, batch: FeatureBatch, class_id: int) -> "GaussianAccumulator":
        """Fold one complete class batch into the statistics. Mutates and returns self."""
        class_id = int(class_id)
        if class_id in self.class_means:
            raise ProtocolError(f"class {class_id} was already observed; classes are disjoint")
        if batch.n_rows < 1:
            raise DataError("update requires a non-empty batch")
        if batch.width != self.dim:
            raise DimensionError(f"batch width {batch.width} != accumulator dim {self.dim}")
        if batch.labels.size and not (batch.labels == class_id).all():
            raise DataError(f"batch contains rows not labeled {class_id}")

        mu, scatter = class_scatter(batch.values)
        n_prev = self.total_count
        n_total = n_prev + batch.n_rows
        self.covariance *= n_prev / n_total
        self.covariance += scatter / n_total
        self.covariance += self.covariance.T.copy()
        self.covariance *= 0.5
        self.class_means[class_id] = mu
        self.per_class_counts[class_id] = batch.n_rows
        self.total_count = n_total
        return self

    def snapshot(self) -> Snapshot:
        """Read-only copies of (means, covariance, counts); later updates leave them untouched."""
        if not self.class_means:
            raise ProtocolError("snapshot of an empty accumulator")
        means = {}
        for cid, mu in self.class_means.items():
            m = mu.copy()
            m.flags.writeable = False
            means[cid] = m
        cov = self.covariance.copy()
        cov.flags.writeable = False
        return Snapshot(means=means, covariance=cov, counts=dict(self.per_class_counts))

    def means_matrix(self) -> tuple[np.ndarray, list[int]]:
        """Means stacked as columns (dim x M) with ids ascending."""
        ids = self.class_ids()
        if not ids:
            raise ProtocolError("no classes observed")
        return np.column_stack([self.class_means[c] for c in ids]), ids

    # --- binary state (magic KACC) ------------------------------------
    #
    # magic 4s | version u32 | D u32 | N_total u64 | M u32
    # | per class (arrival order): id i32, n u64, mu D*f8
    # | covariance D*D f8 row-major | crc32 u32

    def serialize(self) -> bytes:
        chunks = [
            MAGIC,
            struct.pack("<IIQI", VERSION, self.dim, self.total_count, self.num_classes),
        ]
        for cid, mu in self.class_means.items():
            chunks.append(struct.pack("<iQ", cid, self.per_class_counts[cid]))
            chunks.append(_binio.floats_le(mu))
        chunks.append(_binio.floats_le(self.covariance))
        return _binio.append_crc(chunks)

    @classmethod
    def deserialize(cls, buf: bytes) -> "GaussianAccumulator":
        offset = _binio.check_header(buf, 0, MAGIC, VERSION)
        _binio.require(buf, offset, 16, "accumulator header")
        dim, total, m = struct.unpack_from("<IQI", buf, offset)
        offset += 16
        expected = offset + m * (12 + dim * 8) + dim * dim * 8 + 4
        if len(buf) != expected:
            raise _truncation_or_trailing(len(buf), expected)
        _binio.check_crc(buf, 0, expected)
        acc = cls(dim)
        running = 0
        for _ in range(m):
            cid, n = struct.unpack_from("<iQ", buf, offset)
            offset += 12
            mu, offset = _binio.read_floats(buf, offset, dim, (dim,), "class mean")
            if cid in acc.class_means:
                raise FormatError(f"duplicate class id {cid} in state file")
            acc.class_means[cid] = mu
            acc.per_class_counts[cid] = n
            running += n
        if running != total:
            raise FormatError(f"per-class counts sum to {running}, header says {total}")
        acc.covariance, offset = _binio.read_floats(buf, offset, dim * dim, (dim, dim), "covariance")
        acc.total_count = total
        return acc

    def save(self, path) -> None:
        atomic_write(path, self.serialize())

    @classmethod
    def load(cls, path) -> "GaussianAccumulator":
        with open(path, "rb") as fh:
            return cls.deserialize(fh.read())


def _truncation_or_trailing(actual: int, expected: int):
    from .errors import TruncatedFile

    if actual < expected:
        return TruncatedFile(f"state needs {expected} bytes, got {actual}")
    return FormatError(f"state has {actual - expected} trailing bytes")
