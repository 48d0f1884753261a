"""FeatureBatch: the engine's universal sample container.

A batch is an (n, k) float matrix plus n integer class labels. Width k is
the raw feature dimensionality before kernelization and the transform
dimensionality after it. Construction validates the batch invariants once
so downstream code can trust the arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError


@dataclass(frozen=True)
class FeatureBatch:
    values: np.ndarray
    labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {values.shape}")
        labels = self.labels
        if labels is None:
            labels = np.zeros(values.shape[0], dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != values.shape[0]:
            raise DimensionError(
                f"labels shape {labels.shape} does not match {values.shape[0]} rows"
            )
        if values.size and not np.isfinite(values).all():
            raise DataError("feature matrix contains NaN/Inf entries")
        if labels.size and labels.min() < 0:
            raise DataError("labels must be non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def class_ids(self) -> np.ndarray:
        """Distinct labels present, ascending."""
        return np.unique(self.labels)

    def select_class(self, class_id: int) -> "FeatureBatch":
        mask = self.labels == class_id
        return FeatureBatch(self.values[mask], self.labels[mask])

    def select_labels(self, keep: np.ndarray) -> "FeatureBatch":
        mask = np.isin(self.labels, keep)
        return FeatureBatch(self.values[mask], self.labels[mask])


def split_by_class(batch: FeatureBatch) -> dict[int, FeatureBatch]:
    """Partition a mixed batch into one single-class batch per label."""
    return {int(c): batch.select_class(int(c)) for c in batch.class_ids()}
