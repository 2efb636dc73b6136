"""Common base for the grading networks."""

from __future__ import annotations

from typing import TYPE_CHECKING

import torch
import torch.nn.functional as F
from torch import nn

from corads_grader.errors import GeometryError
from corads_grader.models.config import HeadType, ModelConfig

if TYPE_CHECKING:
    from corads_grader.models.checkpoints import LoadReport

HEAD_PREFIX = "fc."


def init_fresh(module: nn.Module) -> None:
    """He fan-in init for conv/linear weights, zero biases, identity batch norm."""
    if isinstance(module, (nn.Conv2d, nn.Conv3d, nn.Linear)):
        nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm2d, nn.BatchNorm3d)):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class GradingNetwork(nn.Module):
    """A network mapping ``(B, C, D, H, W)`` inputs to head logits.

    ``forward`` returns logits; :meth:`activate` turns them into the score in (0, 1) for a
    continuous head or the 5-class probability vector for a categorical one.
    """

    fc: nn.Linear
    input_weight_name: str = "conv1.weight"

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.load_report: LoadReport | None = None

    def check_input(self, x: torch.Tensor) -> None:
        expected = (self.config.input_channels, *self.config.input_geometry)
        if x.ndim != 5 or tuple(x.shape[1:]) != expected:
            raise GeometryError(
                f"model expects (B, {', '.join(map(str, expected))}), got {tuple(x.shape)}"
            )

    def activate(self, logits: torch.Tensor) -> torch.Tensor:
        if self.config.head is HeadType.CONTINUOUS:
            return torch.sigmoid(logits.squeeze(-1))
        return F.softmax(logits, dim=-1)

    def reset_head(self) -> None:
        init_fresh(self.fc)
