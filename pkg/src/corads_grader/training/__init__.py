"""Training: balanced sampling, augmentation, early stopping and the loop itself."""

from corads_grader.training.augment import augment, draw_augmentation
from corads_grader.training.early_stopping import EarlyStopping
from corads_grader.training.sampling import (
    StreamBatchSampler,
    balanced_batch_stream,
    balanced_resample,
)
from corads_grader.training.schemas import (
    AugmentConfig,
    EvalRecord,
    StopReason,
    TrainConfig,
    TrainHistory,
)
from corads_grader.training.trainer import TrainResult, train, validate

__all__ = [
    "AugmentConfig",
    "EarlyStopping",
    "EvalRecord",
    "StopReason",
    "StreamBatchSampler",
    "TrainConfig",
    "TrainHistory",
    "TrainResult",
    "augment",
    "balanced_batch_stream",
    "balanced_resample",
    "draw_augmentation",
    "train",
    "validate",
]
