"""Early stopping on a validation score that should go up (QWK)."""

from __future__ import annotations

import logging

import torch
from torch import nn

logger = logging.getLogger(__name__)


class EarlyStopping:
    """Keeps the best weights seen so far and flags a stop after ``patience_batches`` training
    batches without a strict improvement.

    Args:
        patience_batches: batches to wait after the last improvement.
    """

    def __init__(self, patience_batches: int) -> None:
        self.patience_batches = patience_batches
        self.best_score: float | None = None
        self.best_batch: int | None = None
        self.best_state: dict[str, torch.Tensor] | None = None
        self.early_stop = False
        self.scores: list[float] = []

    def __call__(self, score: float, batch: int, model: nn.Module | None = None) -> bool:
        """Record ``score`` measured after ``batch``; return True if it is a new best."""
        self.scores.append(score)
        improved = self.best_score is None or score > self.best_score
        if improved:
            self.best_score = score
            self.best_batch = batch
            if model is not None:
                self.best_state = {
                    k: v.detach().cpu().clone() for k, v in model.state_dict().items()
                }
            logger.debug("New best validation score %.4f at batch %d", score, batch)
        elif batch - self.best_batch >= self.patience_batches:  # type: ignore[operator]
            self.early_stop = True
            logger.info(
                "Early stop at batch %d: no improvement since batch %d (best %.4f)",
                batch,
                self.best_batch,
                self.best_score,
            )
        return improved
