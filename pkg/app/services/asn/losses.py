# services/asn/losses.py
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.exceptions.custom_exceptions import DimensionError
from app.exceptions.dataset_exceptions import AnnotationConsistencyError
from app.services.tensor import ops
from app.services.tensor.tensor import Tensor


@dataclass(frozen=True)
class GroundTruth:
    """Batched label maps [N, H, W]; 0 marks unchanged pixels in both maps."""
    label1: np.ndarray
    label2: np.ndarray
    change: np.ndarray

    @classmethod
    def from_labels(cls, label1: np.ndarray, label2: np.ndarray) -> "GroundTruth":
        label1, label2 = np.asarray(label1, dtype=np.int64), np.asarray(label2, dtype=np.int64)
        if label1.shape != label2.shape:
            raise DimensionError(f"label maps {label1.shape} and {label2.shape} differ in extent")
        inconsistent = (label1 != 0) != (label2 != 0)
        if np.any(inconsistent):
            count = int(inconsistent.sum())
            raise AnnotationConsistencyError(f"{count} pixels are changed in one label map only", pixel_count=count)
        return cls(label1, label2, (label1 != 0).astype(np.int64))


@dataclass
class LossTerms:
    total: Tensor
    semantic1: float
    semantic2: float
    change: float

    def as_dict(self) -> dict:
        return {"loss": self.total.item(), "semantic1": self.semantic1,
                "semantic2": self.semantic2, "change": self.change}


def scd_loss(m1_raw: Tensor, m2_raw: Tensor, c_raw: Tensor, gt: GroundTruth, alpha: float, beta: float,
             semantic_weights: Optional[Sequence[float]] = None,
             change_weights: Optional[Sequence[float]] = None) -> LossTerms:
    """alpha * E(M1, LG1) + beta * E(M2, LG2) + E(C, LG_c)"""
    e1 = ops.cross_entropy(m1_raw, gt.label1, semantic_weights)
    e2 = ops.cross_entropy(m2_raw, gt.label2, semantic_weights)
    ec = ops.cross_entropy(c_raw, gt.change, change_weights)
    total = ops.add(ops.add(ops.scale(e1, alpha), ops.scale(e2, beta)), ec)
    return LossTerms(total, e1.item(), e2.item(), ec.item())


def loss(outputs, gt: GroundTruth, alpha: float, beta: float) -> LossTerms:
    return scd_loss(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, gt, alpha, beta)
