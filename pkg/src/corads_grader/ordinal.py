"""CO-RADS grades as ordinal targets, the two training losses, and the way back to grades.

A continuous head predicts ``s`` in (0, 1) against ``t = (c - 1) / 4``; grades come back as
``floor(4 s + 0.5) + 1``, so the decision boundaries sit at 0.125, 0.375, 0.625 and 0.875 and
a score on a boundary goes to the higher grade. A categorical head predicts five probabilities;
its positive score is the mass on CO-RADS 3 to 5.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from numpy.typing import ArrayLike

from corads_grader.errors import LabelError
from corads_grader.models.config import N_GRADES, HeadType

POSITIVE_FROM = 3


def _grades(c: ArrayLike) -> np.ndarray:
    grades = np.asarray(c)
    if not np.issubdtype(grades.dtype, np.integer) or ((grades < 1) | (grades > N_GRADES)).any():
        raise LabelError(f"CO-RADS grades must be integers in 1..{N_GRADES}, got {c}")
    return grades


def corads_to_target(c: ArrayLike) -> np.ndarray | float:
    """Grade (1..5) to target in [0, 1]."""
    target = (_grades(c) - 1) / (N_GRADES - 1)
    return float(target) if np.ndim(target) == 0 else target


def score_to_corads(s: ArrayLike) -> np.ndarray | int:
    """Score in [0, 1] to the nearest grade, ties to the higher one."""
    scores = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
    grades = np.floor(scores * (N_GRADES - 1) + 0.5).astype(np.int64) + 1
    return int(grades) if grades.ndim == 0 else grades


def continuous_loss(s: ArrayLike, t: ArrayLike) -> np.ndarray | float:
    """Binary cross-entropy with a soft target."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    loss = -(t * np.log(s) + (1 - t) * np.log1p(-s))
    return float(loss) if loss.ndim == 0 else loss


def categorical_loss(p: ArrayLike, c: int) -> float:
    """Cross-entropy ``-ln p[c]`` for a probability vector over grades 1..5."""
    probabilities = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return float(-np.log(probabilities[int(_grades(c)) - 1]))


def categorical_to_positive_score(p: ArrayLike) -> np.ndarray | float:
    """Probability mass on CO-RADS 3, 4 and 5; works on one vector or a ``(n, 5)`` array."""
    probabilities = np.asarray(p, dtype=np.float64)
    score = probabilities[..., POSITIVE_FROM - 1 :].sum(axis=-1)
    return float(score) if np.ndim(score) == 0 else score


def categorical_to_corads(p: ArrayLike) -> np.ndarray | int:
    """Most probable grade; ties go to the higher grade."""
    probabilities = np.asarray(p, dtype=np.float64)
    # argmax over the reversed axis returns the last maximum
    grades = N_GRADES - np.argmax(probabilities[..., ::-1], axis=-1)
    return int(grades) if np.ndim(grades) == 0 else grades


def outputs_to_scores(outputs: np.ndarray, head: HeadType) -> tuple[np.ndarray, np.ndarray]:
    """Positive scores and grades for a batch of head outputs."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if head is HeadType.CONTINUOUS:
        scores = outputs.reshape(-1)
        return scores, np.asarray(score_to_corads(scores)).reshape(-1)
    return (
        np.asarray(categorical_to_positive_score(outputs)).reshape(-1),
        np.asarray(categorical_to_corads(outputs)).reshape(-1),
    )


def training_loss(logits: torch.Tensor, grades: torch.Tensor, head: HeadType) -> torch.Tensor:
    """Mean batch loss computed from logits for numerical stability."""
    if head is HeadType.CONTINUOUS:
        targets = (grades.to(logits.dtype) - 1) / (N_GRADES - 1)
        return F.binary_cross_entropy_with_logits(logits.squeeze(-1), targets)
    return F.cross_entropy(logits, grades.long() - 1)
