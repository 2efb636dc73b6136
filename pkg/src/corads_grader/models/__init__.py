"""2D and 3D grading networks, kernel inflation and checkpoints."""

from corads_grader.models.base import GradingNetwork
from corads_grader.models.checkpoints import (
    Checkpoint,
    LoadReport,
    TensorStatus,
    load_model_weights,
    load_pretrained,
    read_checkpoint,
    save_model,
    write_checkpoint,
)
from corads_grader.models.config import N_GRADES, Dimensionality, HeadType, ModelConfig
from corads_grader.models.factory import batch_tensor, build_model, forward
from corads_grader.models.inflation import adapt_input_channels, inflate_kernel

__all__ = [
    "N_GRADES",
    "Checkpoint",
    "Dimensionality",
    "GradingNetwork",
    "HeadType",
    "LoadReport",
    "ModelConfig",
    "TensorStatus",
    "adapt_input_channels",
    "batch_tensor",
    "build_model",
    "forward",
    "inflate_kernel",
    "load_model_weights",
    "load_pretrained",
    "read_checkpoint",
    "save_model",
    "write_checkpoint",
]
