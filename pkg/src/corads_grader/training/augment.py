"""Random geometric and intensity augmentation of model inputs.

One sampling grid per draw maps every output voxel back to a source position:

    source_yx = A (p_yx - c) + c + e(p_yx) - t_yx,    source_z = z - t_z

with ``A`` the in-plane zoom/rotation/shear matrix, ``c`` the slice centre, ``e`` a smooth
axial displacement field shared by all slices and ``t`` the translation. The CT channel is
sampled trilinearly, the lesion channel with nearest neighbour so it stays binary. Noise is
added to the CT afterwards and the result clamped back to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from corads_grader.imaging.volume import ModelInput
from corads_grader.training.schemas import AugmentConfig


@dataclass(frozen=True)
class AugmentDraw:
    """The random parameters of one augmentation."""

    zoom: float
    rotation_deg: float
    shear_deg: float
    translation: tuple[float, float, float]
    elastic: np.ndarray | None
    noise_sigma: float


def _elastic_field(
    config: AugmentConfig, shape_hw: tuple[int, int], rng: np.random.Generator
) -> np.ndarray | None:
    grid = config.elastic_grid
    control = rng.uniform(-1.0, 1.0, size=(2, grid, grid)) * config.elastic_magnitude_voxels
    if config.elastic_magnitude_voxels == 0:
        return None
    h, w = shape_hw
    field = np.stack(
        [ndimage.zoom(control[i], (h / grid, w / grid), order=3, mode="nearest") for i in (0, 1)]
    )
    field = field[:, :h, :w]
    if config.elastic_sigma_voxels > 0:
        field = np.stack(
            [ndimage.gaussian_filter(field[i], config.elastic_sigma_voxels) for i in (0, 1)]
        )
    return field


def draw_augmentation(
    config: AugmentConfig, shape_hw: tuple[int, int], rng: np.random.Generator
) -> AugmentDraw:
    """Draw every parameter in a fixed order, so the stream does not depend on magnitudes."""
    zoom = float(rng.uniform(*config.zoom_range))
    rotation = float(rng.uniform(*config.rotation_deg))
    shear = float(rng.uniform(*config.shear_deg))
    tz, ty, tx = (float(rng.uniform(lo, hi)) for lo, hi in config.translation_voxels)
    elastic = _elastic_field(config, shape_hw, rng)
    return AugmentDraw(zoom, rotation, shear, (tz, ty, tx), elastic, config.noise_sigma)


def _normalized(index: torch.Tensor, n: int) -> torch.Tensor:
    if n == 1:
        return torch.zeros_like(index)
    return 2.0 * index / (n - 1) - 1.0


def sampling_grid(shape: tuple[int, int, int], draw: AugmentDraw) -> torch.Tensor:
    """``(1, D, H, W, 3)`` grid in ``grid_sample`` (x, y, z) order, ``align_corners=True``."""
    d, h, w = shape
    z, y, x = torch.meshgrid(
        torch.arange(d, dtype=torch.float64),
        torch.arange(h, dtype=torch.float64),
        torch.arange(w, dtype=torch.float64),
        indexing="ij",
    )
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(draw.rotation_deg)
    shear = math.tan(math.radians(draw.shear_deg))
    rotation = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    matrix = rotation @ np.array([[1.0, shear], [0.0, 1.0]]) / draw.zoom

    dy, dx = y - cy, x - cx
    src_y = matrix[0, 0] * dy + matrix[0, 1] * dx + cy
    src_x = matrix[1, 0] * dy + matrix[1, 1] * dx + cx
    if draw.elastic is not None:
        field = torch.from_numpy(draw.elastic).to(torch.float64)
        src_y = src_y + field[0]
        src_x = src_x + field[1]
    tz, ty, tx = draw.translation
    src_z, src_y, src_x = z - tz, src_y - ty, src_x - tx

    grid = torch.stack(
        [_normalized(src_x, w), _normalized(src_y, h), _normalized(src_z, d)], dim=-1
    )
    return grid.unsqueeze(0).to(torch.float32)


def augment(
    model_input: ModelInput, config: AugmentConfig, rng: np.random.Generator
) -> ModelInput:
    """Augmented copy of ``model_input``; same shape, CT in [0, 1], lesion still binary.

    Labels are not an argument: augmentation cannot change them.
    """
    if config.is_identity:
        return ModelInput(
            tensor=model_input.tensor.copy(),
            scan_id=model_input.scan_id,
            geometry_hash=model_input.geometry_hash,
        )

    tensor = model_input.tensor
    draw = draw_augmentation(config, tensor.shape[2:], rng)
    grid = sampling_grid(tensor.shape[1:], draw)

    source = torch.from_numpy(np.ascontiguousarray(tensor, dtype=np.float32))
    ct = F.grid_sample(
        source[None, :1], grid, mode="bilinear", padding_mode="zeros", align_corners=True
    )[0, 0].numpy()
    if draw.noise_sigma > 0:
        ct = ct + rng.normal(0.0, draw.noise_sigma, size=ct.shape)
    channels = [np.clip(ct, 0.0, 1.0)]
    if model_input.channels == 2:
        lesion = F.grid_sample(
            source[None, 1:], grid, mode="nearest", padding_mode="zeros", align_corners=True
        )[0, 0].numpy()
        channels.append((lesion >= 0.5).astype(np.float32))

    return ModelInput(
        tensor=np.stack(channels).astype(np.float32),
        scan_id=model_input.scan_id,
        geometry_hash=model_input.geometry_hash,
    )
