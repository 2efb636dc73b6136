"""Model construction and batched forward passes."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
import torch

from corads_grader.errors import GeometryError
from corads_grader.imaging.volume import ModelInput
from corads_grader.models.base import GradingNetwork
from corads_grader.models.checkpoints import load_pretrained, read_checkpoint
from corads_grader.models.config import Dimensionality, ModelConfig
from corads_grader.models.i3d import InceptionI3d
from corads_grader.models.resnet import SliceResNet50
from corads_grader.seeding import torch_seed_for

logger = logging.getLogger(__name__)

ARCHITECTURES: dict[Dimensionality, type[GradingNetwork]] = {
    Dimensionality.D3: InceptionI3d,
    Dimensionality.D2: SliceResNet50,
}


def build_model(config: ModelConfig, seed: int = 0) -> GradingNetwork:
    """Instantiate the network for ``config``; fresh weights come from the ``init`` stream.

    With ``pretrained`` set, the checkpoint at ``config.checkpoint_path`` is loaded on top and
    the load report is kept on ``model.load_report``.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(torch_seed_for(seed, "init"))
        model = ARCHITECTURES[config.dimensionality](config)
        if config.pretrained:
            assert config.checkpoint_path is not None
            checkpoint = read_checkpoint(config.checkpoint_path)
            model.load_report = load_pretrained(model, checkpoint)

    n_params = sum(p.numel() for p in model.parameters())
    logger.info(
        "Built %s model (%s head, %d input channels, %d parameters)",
        config.dimensionality.value,
        config.head.value,
        config.input_channels,
        n_params,
    )
    return model


def batch_tensor(
    inputs: Sequence[ModelInput] | torch.Tensor, device: torch.device | str | None = None
) -> torch.Tensor:
    if isinstance(inputs, torch.Tensor):
        return inputs.to(device) if device is not None else inputs
    shapes = {item.tensor.shape for item in inputs}
    if len(shapes) != 1:
        raise GeometryError(f"inputs in one batch have different shapes: {sorted(shapes)}")
    stacked = torch.from_numpy(np.stack([item.tensor for item in inputs]).astype(np.float32))
    return stacked.to(device) if device is not None else stacked


def forward(model: GradingNetwork, inputs: Sequence[ModelInput] | torch.Tensor) -> torch.Tensor:
    """Head outputs for a batch: ``(B,)`` scores or ``(B, 5)`` probabilities."""
    device = next(model.parameters()).device
    x = batch_tensor(inputs, device).to(next(model.parameters()).dtype)
    return model.activate(model(x))
