"""Inflated Inception V1 (I3D) with the depth axis in the temporal role.

Module names follow the 2D Inception V1 (GoogLeNet) layout (``conv1.conv``, ``conv1.bn``,
``inception3a.branch2.1.conv`` ...), so a 2D GoogLeNet state dict inflates onto this network
tensor by tensor. Like the common 2D implementation, the "5x5" branch uses 3x3 kernels.

Layer table (kernel / stride as depth x height x width, output for a 128 x 240 x 240 input):

    conv1        7x7x7 / 2        64    64 x 120 x 120
    maxpool1     1x3x3 / 1x2x2          64 x  60 x  60
    conv2        1x1x1            64
    conv3        3x3x3            192
    maxpool2     1x3x3 / 1x2x2          64 x  30 x  30
    inception3a, 3b               480
    maxpool3     3x3x3 / 2              32 x  15 x  15
    inception4a .. 4e             832
    maxpool4     2x2x2 / 2 (ceil)       16 x   8 x   8
    inception5a, 5b               1024
    global average pool, dropout, fc
"""

from __future__ import annotations

import math

import torch
from torch import nn

from corads_grader.errors import GeometryError
from corads_grader.models.base import GradingNetwork, init_fresh
from corads_grader.models.config import ModelConfig

# 1x1, 3x3 reduce, 3x3, "5x5" reduce, "5x5", pool proj
_INCEPTION_SPECS: dict[str, tuple[int, int, int, int, int, int]] = {
    "3a": (64, 96, 128, 16, 32, 32),
    "3b": (128, 128, 192, 32, 96, 64),
    "4a": (192, 96, 208, 16, 48, 64),
    "4b": (160, 112, 224, 24, 64, 64),
    "4c": (128, 128, 256, 24, 64, 64),
    "4d": (112, 144, 288, 32, 64, 64),
    "4e": (256, 160, 320, 32, 128, 128),
    "5a": (256, 160, 320, 32, 128, 128),
    "5b": (384, 192, 384, 48, 128, 128),
}

Size3 = tuple[int, int, int]


class BasicConv3d(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size, stride=1, padding=0):
        super().__init__()
        self.conv = nn.Conv3d(
            in_channels, out_channels, kernel_size, stride=stride, padding=padding, bias=False
        )
        self.bn = nn.BatchNorm3d(out_channels, eps=0.001)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.bn(self.conv(x)))


class Inception3d(nn.Module):
    def __init__(self, in_channels: int, widths: tuple[int, int, int, int, int, int]) -> None:
        super().__init__()
        ch1x1, ch3x3red, ch3x3, ch5x5red, ch5x5, pool_proj = widths
        self.branch1 = BasicConv3d(in_channels, ch1x1, 1)
        self.branch2 = nn.Sequential(
            BasicConv3d(in_channels, ch3x3red, 1), BasicConv3d(ch3x3red, ch3x3, 3, padding=1)
        )
        self.branch3 = nn.Sequential(
            BasicConv3d(in_channels, ch5x5red, 1), BasicConv3d(ch5x5red, ch5x5, 3, padding=1)
        )
        self.branch4 = nn.Sequential(
            nn.MaxPool3d(3, stride=1, padding=1), BasicConv3d(in_channels, pool_proj, 1)
        )
        self.out_channels = ch1x1 + ch3x3 + ch5x5 + pool_proj

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat(
            [self.branch1(x), self.branch2(x), self.branch3(x), self.branch4(x)], dim=1
        )


def _pooled(n: int, kernel: int, stride: int, padding: int, ceil: bool = False) -> int:
    steps = (n + 2 * padding - kernel) / stride
    return (math.ceil(steps) if ceil else math.floor(steps)) + 1


def feature_geometry(geometry: Size3) -> Size3:
    """Spatial size entering ``maxpool4``; raises GeometryError if the stride schedule
    cannot consume ``geometry``."""
    d, h, w = geometry
    d, h, w = (_pooled(n, 7, 2, 3) for n in (d, h, w))
    h, w = (_pooled(n, 3, 2, 1) for n in (h, w))
    h, w = (_pooled(n, 3, 2, 1) for n in (h, w))
    d, h, w = (_pooled(n, 3, 2, 1) for n in (d, h, w))
    if min(d, h, w) < 2:
        raise GeometryError(
            f"input geometry {geometry} is too small for the 3D stride schedule "
            f"(reaches {(d, h, w)} before the last pooling, needs >= 2 per axis)"
        )
    return d, h, w


class InceptionI3d(GradingNetwork):
    input_weight_name = "conv1.conv.weight"

    def __init__(self, config: ModelConfig) -> None:
        super().__init__(config)
        feature_geometry(config.input_geometry)
        s = config.scaled

        self.conv1 = BasicConv3d(config.input_channels, s(64), 7, stride=2, padding=3)
        self.maxpool1 = nn.MaxPool3d((1, 3, 3), stride=(1, 2, 2), padding=(0, 1, 1))
        self.conv2 = BasicConv3d(s(64), s(64), 1)
        self.conv3 = BasicConv3d(s(64), s(192), 3, padding=1)
        self.maxpool2 = nn.MaxPool3d((1, 3, 3), stride=(1, 2, 2), padding=(0, 1, 1))

        channels = s(192)
        for key, widths in _INCEPTION_SPECS.items():
            block = Inception3d(channels, tuple(s(c) for c in widths))  # type: ignore[arg-type]
            self.add_module(f"inception{key}", block)
            channels = block.out_channels
        self.maxpool3 = nn.MaxPool3d(3, stride=2, padding=1)
        self.maxpool4 = nn.MaxPool3d(2, stride=2, ceil_mode=True)

        self.avgpool = nn.AdaptiveAvgPool3d(1)
        self.dropout = nn.Dropout(config.dropout)
        self.fc = nn.Linear(channels, config.n_outputs)
        self.apply(init_fresh)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        x = self.maxpool1(self.conv1(x))
        x = self.maxpool2(self.conv3(self.conv2(x)))
        x = self.inception3b(self.inception3a(x))
        x = self.maxpool3(x)
        for key in ("4a", "4b", "4c", "4d", "4e"):
            x = getattr(self, f"inception{key}")(x)
        x = self.maxpool4(x)
        x = self.inception5b(self.inception5a(x))
        return torch.flatten(self.avgpool(x), 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        return self.fc(self.dropout(self.features(x)))
