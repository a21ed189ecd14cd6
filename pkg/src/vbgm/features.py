"""Feature matrices: n x d real vectors with optional integer labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteFeature

UNLABELED = -1


@dataclass
class FeatureMatrix:
    """Row-major feature vectors with per-row labels (-1 means unlabeled).

    Data is stored as float64 regardless of the on-disk precision; labels
    are int64. Both arrays are validated on construction.
    """

    data: np.ndarray
    labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DimensionMismatch(f"feature data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[1] < 1:
            raise DimensionMismatch("feature dimension must be >= 1")
        if self.data.size and not np.all(np.isfinite(self.data)):
            raise NonFiniteFeature("feature data contains NaN or Inf")
        if self.labels is None:
            self.labels = np.full(self.data.shape[0], UNLABELED, dtype=np.int64)
        else:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.data.shape[0],):
            raise DimensionMismatch(
                f"labels length {self.labels.shape} does not match {self.data.shape[0]} rows"
            )
        if self.labels.size and self.labels.min() < UNLABELED:
            raise ValueError("labels must be -1 (unlabeled) or non-negative")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def is_fully_labeled(self) -> bool:
        return bool(self.n == 0 or self.labels.min() >= 0)

    def select(self, indices) -> "FeatureMatrix":
        """Row subset; indices follow numpy fancy-indexing rules."""
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(self.data[idx], self.labels[idx])

    def without_labels(self) -> "FeatureMatrix":
        """Copy with every label erased to -1."""
        return FeatureMatrix(self.data.copy(), None)

    def class_ids(self) -> np.ndarray:
        """Sorted distinct non-negative labels."""
        labeled = self.labels[self.labels >= 0]
        return np.unique(labeled)

    def rows_of(self, label: int) -> "FeatureMatrix":
        return self.select(np.nonzero(self.labels == label)[0])


def empty_features(dim: int) -> FeatureMatrix:
    return FeatureMatrix(np.empty((0, dim), dtype=np.float64), None)
