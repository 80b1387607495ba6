# services/metrics/confusion.py
"""
Change-type indexing and the confusion matrix every metric is read from.

A pair map is an integer array shaped [..., 2] holding (l1, l2) per pixel,
with (0, 0) for non-change and both labels in 1..N otherwise.
"""
from typing import List, Optional, Tuple

import numpy as np

from app.exceptions.custom_exceptions import DimensionError, LabelError
from app.exceptions.dataset_exceptions import AnnotationConsistencyError


def pair_to_class(l1: int, l2: int, num_classes: int) -> int:
    """(0,0) -> 0, (l1,l2) -> 1 + (l1-1)*N + (l2-1)"""
    return int(ChangeTypeIndex(num_classes).encode(np.array([[l1, l2]]))[0])


class ChangeTypeIndex:
    """Bijection between {non-change} plus ordered class pairs and 0..N*N."""

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise LabelError(f"num_classes must be positive, got {num_classes}")
        self.num_classes = num_classes

    @property
    def size(self) -> int:
        return self.num_classes * self.num_classes + 1

    def encode(self, pairs: np.ndarray) -> np.ndarray:
        pairs = np.asarray(pairs)
        if pairs.shape[-1] != 2:
            raise DimensionError(f"pair map must end in an axis of 2, got {pairs.shape}")
        l1, l2 = pairs[..., 0].astype(np.int64), pairs[..., 1].astype(np.int64)
        n = self.num_classes
        if np.any((l1 < 0) | (l1 > n) | (l2 < 0) | (l2 > n)):
            raise LabelError(f"pair labels must lie in 0..{n}")
        mixed = (l1 == 0) != (l2 == 0)
        if np.any(mixed):
            count = int(mixed.sum())
            raise AnnotationConsistencyError(
                f"{count} pixels pair a non-change label with a change label", pixel_count=count
            )
        return np.where(l1 == 0, 0, 1 + (l1 - 1) * n + (l2 - 1))

    def decode(self, index: int) -> Tuple[int, int]:
        if not 0 <= index < self.size:
            raise LabelError(f"change type {index} outside 0..{self.size - 1}")
        if index == 0:
            return 0, 0
        return 1 + (index - 1) // self.num_classes, 1 + (index - 1) % self.num_classes

    def change_types(self) -> List[Tuple[int, int]]:
        return [self.decode(index) for index in range(1, self.size)]

    @staticmethod
    def key(pair: Tuple[int, int]) -> str:
        return f"({pair[0]},{pair[1]})"


class ConfusionMatrix:
    """
    C x C int64 counts, row = predicted change type, column = true type.
    Merge is entrywise addition.
    """

    def __init__(self, size: int, counts: Optional[np.ndarray] = None):
        if size < 2:
            raise DimensionError(f"confusion matrix needs at least 2 change types, got {size}")
        self.size = size
        if counts is None:
            counts = np.zeros((size, size), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (size, size):
            raise DimensionError(f"counts of shape {counts.shape} do not form a {size}x{size} matrix")
        if np.any(counts < 0):
            raise DimensionError("confusion counts must be non-negative")
        self.counts = counts

    @classmethod
    def for_index(cls, index: ChangeTypeIndex) -> "ConfusionMatrix":
        return cls(index.size)

    @classmethod
    def from_counts(cls, counts) -> "ConfusionMatrix":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(counts.shape[0], counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate_indices(self, pred: np.ndarray, truth: np.ndarray) -> "ConfusionMatrix":
        pred, truth = np.asarray(pred, dtype=np.int64), np.asarray(truth, dtype=np.int64)
        if pred.shape != truth.shape:
            raise DimensionError(f"prediction extent {pred.shape} differs from ground truth {truth.shape}")
        if pred.size and (pred.min() < 0 or truth.min() < 0 or pred.max() >= self.size or truth.max() >= self.size):
            raise LabelError(f"change type indices must lie in 0..{self.size - 1}")
        flat = pred.reshape(-1) * self.size + truth.reshape(-1)
        self.counts += np.bincount(flat, minlength=self.size * self.size).reshape(self.size, self.size)
        return self

    def accumulate(self, pred: np.ndarray, truth: np.ndarray, index: ChangeTypeIndex) -> "ConfusionMatrix":
        """Add one (prediction, ground truth) pair map to the counts."""
        if index.size != self.size:
            raise DimensionError(f"index spans {index.size} change types, matrix holds {self.size}")
        pred, truth = np.asarray(pred), np.asarray(truth)
        if pred.shape != truth.shape:
            raise DimensionError(f"prediction extent {pred.shape[:-1]} differs from ground truth {truth.shape[:-1]}")
        return self.accumulate_indices(index.encode(pred), index.encode(truth))

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.size != self.size:
            raise DimensionError(f"cannot merge {self.size}x{self.size} with {other.size}x{other.size}")
        return ConfusionMatrix(self.size, self.counts + other.counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return self.merge(other)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"ConfusionMatrix(size={self.size}, total={self.total})"


def accumulate(pred: np.ndarray, truth: np.ndarray, matrix: ConfusionMatrix,
               index: ChangeTypeIndex) -> ConfusionMatrix:
    return matrix.accumulate(pred, truth, index)


def merge(first: ConfusionMatrix, second: ConfusionMatrix) -> ConfusionMatrix:
    return first.merge(second)


def pair_map(label1: np.ndarray, label2: np.ndarray) -> np.ndarray:
    """Stack two label maps into an [H, W, 2] pair map."""
    label1, label2 = np.asarray(label1), np.asarray(label2)
    if label1.shape != label2.shape:
        raise DimensionError(f"label maps {label1.shape} and {label2.shape} differ in extent")
    return np.stack([label1, label2], axis=-1).astype(np.int64)
