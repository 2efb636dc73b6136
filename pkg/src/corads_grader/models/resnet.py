"""Slice-wise 2D ResNet-50 grader.

Every axial slice goes through the same ResNet-50 trunk; the feature maps of all slices are
max-pooled jointly over (slices x height x width) into one vector before the fully connected
head, so the output does not depend on slice order. Module names follow the usual ResNet-50
layout (``conv1``, ``bn1``, ``layer1.0.conv1``, ``layer1.0.downsample.0`` ...).
"""

from __future__ import annotations

import torch
from torch import nn
from torch.utils.checkpoint import checkpoint

from corads_grader.models.base import GradingNetwork, init_fresh
from corads_grader.models.config import ModelConfig

_STAGES = ((64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2))


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_channels: int, width: int, stride: int = 1) -> None:
        super().__init__()
        out_channels = width * self.expansion
        self.conv1 = nn.Conv2d(in_channels, width, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, width, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(width)
        self.conv3 = nn.Conv2d(width, out_channels, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        self.downsample: nn.Module | None = None
        if stride != 1 or in_channels != out_channels:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


class SliceResNet50(GradingNetwork):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__(config)
        s = config.scaled

        self.conv1 = nn.Conv2d(config.input_channels, s(64), 7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(s(64))
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)

        channels = s(64)
        for index, (width, blocks, stride) in enumerate(_STAGES, start=1):
            layers = []
            for b in range(blocks):
                layers.append(Bottleneck(channels, s(width), stride if b == 0 else 1))
                channels = s(width) * Bottleneck.expansion
            self.add_module(f"layer{index}", nn.Sequential(*layers))

        self.fc = nn.Linear(channels, config.n_outputs)
        self.apply(init_fresh)

    def _stages(self) -> list[nn.Module]:
        return [self.layer1, self.layer2, self.layer3, self.layer4]

    def slice_features(self, slices: torch.Tensor) -> torch.Tensor:
        """``(N, C, H, W)`` slices to ``(N, F, h, w)`` feature maps."""
        x = self.maxpool(self.relu(self.bn1(self.conv1(slices))))
        for stage in self._stages():
            if self.config.gradient_checkpointing and self.training and x.requires_grad:
                x = checkpoint(stage, x, use_reentrant=False)
            else:
                x = stage(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        batch, channels, depth, height, width = x.shape
        slices = x.permute(0, 2, 1, 3, 4).reshape(batch * depth, channels, height, width)
        maps = self.slice_features(slices)
        maps = maps.reshape(batch, depth, *maps.shape[1:])
        pooled = maps.amax(dim=(1, 3, 4))
        return self.fc(pooled)
