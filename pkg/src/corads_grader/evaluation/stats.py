"""Agreement and discrimination metrics: QWK, ROC/AUC and confusion matrices."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel
from scipy.stats import rankdata
from sklearn.metrics import cohen_kappa_score, roc_curve
from sklearn.metrics import confusion_matrix as sk_confusion_matrix

from corads_grader.errors import DataError, LabelError, MetricUndefinedError

DEFAULT_K = 5


class RocPoint(BaseModel):
    """One operating point; ``threshold`` is None for the (0, 0) endpoint."""

    fpr: float
    tpr: float
    threshold: float | None


def _check_grades(values: ArrayLike, k: int, name: str) -> np.ndarray:
    grades = np.asarray(values)
    if grades.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if grades.size and (
        not np.issubdtype(grades.dtype, np.integer) or grades.min() < 1 or grades.max() > k
    ):
        raise LabelError(f"{name} must hold integer grades in 1..{k}")
    return grades.astype(np.int64)


def qwk(y_true: ArrayLike, y_pred: ArrayLike, k: int = DEFAULT_K) -> float:
    """Quadratic weighted kappa between two grade vectors over classes 1..k.

    Raises MetricUndefinedError with fewer than two distinct true grades.
    """
    truth = _check_grades(y_true, k, "y_true")
    pred = _check_grades(y_pred, k, "y_pred")
    if truth.shape != pred.shape:
        raise DataError(f"length mismatch: {truth.size} true vs {pred.size} predicted grades")
    if truth.size < 2 or np.unique(truth).size < 2:
        raise MetricUndefinedError("QWK needs at least two distinct true grades")
    return float(
        cohen_kappa_score(truth, pred, labels=list(range(1, k + 1)), weights="quadratic")
    )


def _check_binary(scores: ArrayLike, labels: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if not np.isin(y, (0, 1)).all():
        raise LabelError("ROC labels must be 0 or 1")
    if not np.isfinite(s).all():
        raise DataError("scores must be finite")
    y = y.astype(np.int64)
    if y.size == 0 or y.min() == y.max():
        raise MetricUndefinedError("AUC needs both positive and negative scans")
    return s, y


def auc_score(scores: ArrayLike, labels: ArrayLike) -> float:
    """Mann-Whitney AUC: (wins + 0.5 ties) / (n_pos * n_neg), computed from mid-ranks."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_auc(scores: ArrayLike, labels: ArrayLike) -> tuple[float, list[RocPoint]]:
    """AUC and the ROC curve over every distinct threshold, from (0, 0) to (1, 1)."""
    s, y = _check_binary(scores, labels)
    fpr, tpr, thresholds = roc_curve(y, s, drop_intermediate=False)
    points = [
        RocPoint(fpr=float(f), tpr=float(t), threshold=float(th) if np.isfinite(th) else None)
        for f, t, th in zip(fpr, tpr, thresholds)
    ]
    if (points[0].fpr, points[0].tpr) != (0.0, 0.0):
        points.insert(0, RocPoint(fpr=0.0, tpr=0.0, threshold=None))
    return auc_score(s, y), points


def confusion_matrix(y_true: ArrayLike, y_pred: ArrayLike, k: int = DEFAULT_K) -> np.ndarray:
    """``k x k`` counts, entry (i, j) = scans of true grade i + 1 predicted as j + 1."""
    truth = _check_grades(y_true, k, "y_true")
    pred = _check_grades(y_pred, k, "y_pred")
    if truth.shape != pred.shape:
        raise DataError(f"length mismatch: {truth.size} true vs {pred.size} predicted grades")
    return sk_confusion_matrix(truth, pred, labels=list(range(1, k + 1))).astype(np.int64)


def off_by_more_than(y_true: ArrayLike, y_pred: ArrayLike, distance: int) -> int:
    """Number of scans whose predicted grade is more than ``distance`` grades off."""
    diff = np.abs(np.asarray(y_true, dtype=np.int64) - np.asarray(y_pred, dtype=np.int64))
    return int((diff > distance).sum())
