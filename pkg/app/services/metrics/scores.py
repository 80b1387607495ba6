# services/metrics/scores.py
"""
Scalar metrics over a change-type confusion matrix (index 0 = non-change).

All ratios are taken in float64 from exact int64 counts. Functions are pure.
"""
import math
from typing import Literal, Tuple, Union

import numpy as np

from app.constants import DEGENERATE_EPS
from app.exceptions.custom_exceptions import LabelError, UndefinedInputError
from app.services.metrics.confusion import ConfusionMatrix

MatrixLike = Union[ConfusionMatrix, np.ndarray]
ExcludeMode = Literal["entry", "delete"]


def _counts(matrix: MatrixLike) -> np.ndarray:
    counts = matrix.counts if isinstance(matrix, ConfusionMatrix) else np.asarray(matrix, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 2:
        raise UndefinedInputError(f"expected a square confusion matrix, got shape {counts.shape}")
    if counts.sum() == 0:
        raise UndefinedInputError("confusion matrix is empty")
    return counts


def _chance_corrected(rho: float, eta: float) -> float:
    if 1.0 - eta < DEGENERATE_EPS:
        return 1.0 if rho >= 1.0 - DEGENERATE_EPS else 0.0
    return (rho - eta) / (1.0 - eta)


def _agreement(counts: np.ndarray, total: float) -> Tuple[float, float]:
    rho = float(np.trace(counts)) / total
    eta = float((counts.sum(axis=1).astype(np.float64) * counts.sum(axis=0)).sum()) / (total * total)
    return rho, eta


def oa(matrix: MatrixLike) -> float:
    counts = _counts(matrix)
    return float(np.trace(counts)) / float(counts.sum())


def kappa(matrix: MatrixLike) -> float:
    counts = _counts(matrix)
    rho, eta = _agreement(counts, float(counts.sum()))
    return _chance_corrected(rho, eta)


def iou_pair(matrix: MatrixLike) -> Tuple[float, float]:
    """
    IOU of the non-change type and of all change types pooled together.
    An empty denominator means nothing of that kind was predicted or present: 1.
    """
    counts = _counts(matrix)
    q00 = float(counts[0, 0])
    union_nonchange = float(counts[0, :].sum() + counts[:, 0].sum()) - q00
    iou1 = 1.0 if union_nonchange == 0 else q00 / union_nonchange
    changed = float(counts.sum()) - q00
    iou2 = 1.0 if changed == 0 else float(counts[1:, 1:].sum()) / changed
    return iou1, iou2


def miou(matrix: MatrixLike) -> float:
    iou1, iou2 = iou_pair(matrix)
    return 0.5 * (iou1 + iou2)


def sek(matrix: MatrixLike, exclude: ExcludeMode = "entry") -> float:
    """
    Separated kappa: exp(IOU2 - 1) times kappa computed with q00 removed.

    `exclude="entry"` zeroes only q00, so missed and hallucinated changes in
    row/column 0 still enter the chance term. `exclude="delete"` drops row and
    column 0 altogether.
    """
    counts = _counts(matrix)
    _, iou2 = iou_pair(counts)
    if exclude == "entry":
        reduced = counts.copy()
        reduced[0, 0] = 0
    elif exclude == "delete":
        reduced = counts[1:, 1:]
    else:
        raise LabelError(f"unknown exclusion mode '{exclude}'")

    denominator = float(reduced.sum())
    if float(counts.sum()) - float(counts[0, 0]) == 0:
        return 1.0
    if denominator == 0:
        return 0.0
    rho_hat = float(np.trace(counts[1:, 1:])) / denominator
    eta_hat = float((reduced.sum(axis=1).astype(np.float64) * reduced.sum(axis=0)).sum()) / (denominator ** 2)
    return math.exp(iou2 - 1.0) * _chance_corrected(rho_hat, eta_hat)


def collapse_to_type(matrix: MatrixLike, change_type: int) -> np.ndarray:
    """2x2 matrix of `change_type` against everything else (slot 0)."""
    counts = _counts(matrix)
    if change_type == 0:
        raise LabelError("non-change is scored by IOU1/IOU2, not categorical SeK")
    if not 0 < change_type < counts.shape[0]:
        raise LabelError(f"change type {change_type} outside 1..{counts.shape[0] - 1}")
    hit = counts[change_type, change_type]
    false_alarm = counts[change_type, :].sum() - hit
    missed = counts[:, change_type].sum() - hit
    rest = counts.sum() - hit - false_alarm - missed
    return np.array([[rest, missed], [false_alarm, hit]], dtype=np.int64)


def type_present(matrix: MatrixLike, change_type: int) -> bool:
    counts = _counts(matrix)
    return bool(counts[change_type, :].sum() + counts[:, change_type].sum() > 0)


def categorical_sek(matrix: MatrixLike, change_type: int, exclude: ExcludeMode = "entry") -> float:
    """SeK of one change type after collapsing the matrix to 2x2. Absent types score 0."""
    collapsed = collapse_to_type(matrix, change_type)
    if collapsed[0, 1] + collapsed[1, 0] + collapsed[1, 1] == 0:
        return 0.0
    return sek(collapsed, exclude=exclude)
