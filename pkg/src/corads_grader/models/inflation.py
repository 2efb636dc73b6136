"""2D to 3D kernel inflation and input-channel adaptation."""

from __future__ import annotations

import torch

from corads_grader.errors import CheckpointError


def inflate_kernel(weights_2d: torch.Tensor, depth: int) -> torch.Tensor:
    """Repeat an ``(out, in, k, k)`` kernel ``depth`` times along a new depth axis, scaled by
    ``1 / depth``, giving ``(out, in, depth, k, k)``.

    A 3D convolution with the result on an input that is constant along depth reproduces the
    2D convolution.
    """
    if weights_2d.ndim != 4:
        raise CheckpointError(f"expected a 4D kernel, got shape {tuple(weights_2d.shape)}")
    if depth < 1:
        raise CheckpointError(f"inflation depth must be >= 1, got {depth}")
    return weights_2d.unsqueeze(2).repeat(1, 1, depth, 1, 1) / depth


def adapt_input_channels(weights: torch.Tensor, channels: int) -> torch.Tensor:
    """Fit the input-channel axis (dim 1) of a first-layer kernel to ``channels``.

    Channels present in both keep their filters; extra target channels get the mean over the
    source filters. With fewer target than source channels, every target channel gets the mean.
    """
    source = weights.shape[1]
    if source == channels:
        return weights
    mean = weights.mean(dim=1, keepdim=True)
    if channels < source:
        return mean.expand(-1, channels, *weights.shape[2:]).clone()
    extra = mean.expand(-1, channels - source, *weights.shape[2:])
    return torch.cat([weights, extra], dim=1)
