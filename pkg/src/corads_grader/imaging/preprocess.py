"""CT preprocessing: clip/normalize, resample, crop around the lungs, sample slices, stack.

The chain runs in that order; lung and lesion masks go through the same geometric steps as the
CT so the channels stay voxel-aligned. Everything here is deterministic.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from typing import Literal, TypeVar

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator

from corads_grader.errors import GeometryError, MaskError
from corads_grader.imaging.volume import BinaryMask, CtVolume, ModelInput, Spacing
from corads_grader.metrics import metrics

logger = logging.getLogger(__name__)


class PreprocessConfig(BaseModel):
    """Preprocessing geometry. Defaults reproduce the reference 128 x 240 x 240 input."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    clip_lo: float = -1100.0
    clip_hi: float = 300.0
    target_spacing_mm: float = Field(1.5, gt=0)
    margin_mm: float = Field(10.0, ge=0)
    crop_hw: tuple[int, int] = (240, 240)
    n_slices: int = Field(128, ge=1)
    center_mode: Literal["bbox", "centroid"] = "bbox"

    @model_validator(mode="after")
    def _check(self) -> PreprocessConfig:
        if not self.clip_lo < self.clip_hi:
            raise ValueError(f"clip_lo ({self.clip_lo}) must be below clip_hi ({self.clip_hi})")
        if min(self.crop_hw) < 1:
            raise ValueError(f"crop dimensions must be >= 1, got {self.crop_hw}")
        return self

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return (self.n_slices, *self.crop_hw)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class CropWindow:
    """Which axial slices survive the lung-distance rule and where the in-plane crop starts."""

    kept_slices: np.ndarray
    y0: int
    x0: int
    crop_hw: tuple[int, int]


@dataclass(frozen=True)
class PreprocessedScan:
    """CT and optional lesion map after the geometric chain, before channel stacking."""

    scan_id: str
    ct: np.ndarray
    lesion: np.ndarray | None

    def to_model_input(self, with_lesion: bool, geometry_hash: str = "") -> ModelInput:
        if with_lesion and self.lesion is None:
            raise MaskError(f"{self.scan_id}: lesion channel requested but no lesion map")
        return stack_channels(
            self.ct, self.lesion if with_lesion else None, self.scan_id, geometry_hash
        )


def _round_half_up(x: np.ndarray | float) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def clip_and_normalize(volume: CtVolume, config: PreprocessConfig) -> CtVolume:
    """Clamp HU to ``[clip_lo, clip_hi]`` and map linearly onto [0, 1]."""
    lo, hi = config.clip_lo, config.clip_hi
    voxels = (np.clip(volume.voxels.astype(np.float32), lo, hi) - lo) / (hi - lo)
    return CtVolume(
        voxels=np.clip(voxels, 0.0, 1.0).astype(np.float32),
        spacing_mm=volume.spacing_mm,
        scan_id=volume.scan_id,
    )


def resampled_shape(shape: tuple[int, ...], spacing: Spacing, target: Spacing) -> tuple[int, ...]:
    extents = [n * s for n, s in zip(shape, spacing)]
    if any(e <= 0 for e in extents):
        raise GeometryError(f"degenerate volume extent {extents} mm")
    return tuple(max(1, int(_round_half_up(e / t))) for e, t in zip(extents, target))


def _interpolate(array: np.ndarray, size: tuple[int, ...]) -> np.ndarray:
    if tuple(array.shape) == tuple(size):
        return array.astype(np.float32, copy=True)
    tensor = torch.from_numpy(np.ascontiguousarray(array, dtype=np.float32))[None, None]
    out = F.interpolate(tensor, size=size, mode="trilinear", align_corners=False)
    return out[0, 0].numpy()


VolumeOrMask = TypeVar("VolumeOrMask", CtVolume, BinaryMask)


def resample(item: VolumeOrMask, target_spacing: float | Spacing) -> VolumeOrMask:
    """Resample to ``target_spacing`` with trilinear interpolation.

    Output size per axis is ``round(extent_mm / target_spacing)`` (at least 1). Masks are
    interpolated and thresholded at 0.5 so they stay binary.
    """
    if isinstance(target_spacing, (int, float)):
        target: Spacing = (float(target_spacing),) * 3  # type: ignore[assignment]
    else:
        target = tuple(float(t) for t in target_spacing)  # type: ignore[assignment]
    if any(t <= 0 for t in target):
        raise GeometryError(f"target spacing must be positive, got {target}")

    size = resampled_shape(item.shape, item.spacing_mm, target)
    if isinstance(item, BinaryMask):
        voxels = (_interpolate(item.voxels, size) >= 0.5).astype(np.uint8)
        return BinaryMask(voxels=voxels, spacing_mm=target, kind=item.kind)
    return CtVolume(
        voxels=_interpolate(item.voxels, size), spacing_mm=target, scan_id=item.scan_id
    )


def lung_crop_window(
    lung_mask: BinaryMask, config: PreprocessConfig, scan_id: str = ""
) -> CropWindow:
    """Slices closer than ``margin_mm`` (z-distance) to a lung slice, and the in-plane window.

    The window of ``crop_hw`` is centred on the mask's bounding-box centre (or centroid when
    ``center_mode="centroid"``), rounded half-up to a voxel.
    """
    if lung_mask.is_empty:
        raise MaskError(f"{scan_id or 'scan'}: lung mask is empty")

    voxels = lung_mask.voxels
    mask_slices = np.flatnonzero(voxels.any(axis=(1, 2)))
    z = np.arange(voxels.shape[0])
    nearest = np.min(np.abs(z[:, None] - mask_slices[None, :]), axis=1)
    kept = z[nearest * lung_mask.spacing_mm[0] < config.margin_mm]

    ys = np.flatnonzero(voxels.any(axis=(0, 2)))
    xs = np.flatnonzero(voxels.any(axis=(0, 1)))
    if config.center_mode == "bbox":
        cy = _round_half_up((ys[0] + ys[-1]) / 2)
        cx = _round_half_up((xs[0] + xs[-1]) / 2)
    else:
        coords = np.argwhere(voxels)
        cy = _round_half_up(coords[:, 1].mean())
        cx = _round_half_up(coords[:, 2].mean())
    crop_h, crop_w = config.crop_hw
    return CropWindow(
        kept_slices=kept, y0=int(cy) - crop_h // 2, x0=int(cx) - crop_w // 2, crop_hw=config.crop_hw
    )


def apply_crop(array: np.ndarray, window: CropWindow, pad_value: float = 0.0) -> np.ndarray:
    """Keep ``window.kept_slices`` and cut the in-plane window, padding outside the grid."""
    crop_h, crop_w = window.crop_hw
    kept = array[window.kept_slices]
    out = np.full((kept.shape[0], crop_h, crop_w), pad_value, dtype=array.dtype)

    src_y0, src_x0 = max(window.y0, 0), max(window.x0, 0)
    src_y1 = min(window.y0 + crop_h, array.shape[1])
    src_x1 = min(window.x0 + crop_w, array.shape[2])
    if src_y1 > src_y0 and src_x1 > src_x0:
        dst_y0, dst_x0 = src_y0 - window.y0, src_x0 - window.x0
        out[:, dst_y0 : dst_y0 + src_y1 - src_y0, dst_x0 : dst_x0 + src_x1 - src_x0] = kept[
            :, src_y0:src_y1, src_x0:src_x1
        ]
    return out


def crop_to_lungs(volume: CtVolume, lung_mask: BinaryMask, config: PreprocessConfig) -> CtVolume:
    """Discard slices far from the lungs and crop ``crop_hw`` around the mask centre.

    Expects a normalized volume; out-of-bounds regions are padded with 0 (air).
    """
    lung_mask.check_aligned(volume)
    window = lung_crop_window(lung_mask, config, volume.scan_id)
    return CtVolume(
        voxels=apply_crop(volume.voxels, window),
        spacing_mm=volume.spacing_mm,
        scan_id=volume.scan_id,
    )


def sample_indices(n_available: int, n_slices: int) -> np.ndarray:
    """``round(linspace(0, N - 1, n))`` with half-up rounding; repeats when N < n."""
    if n_available < 1:
        raise GeometryError("cannot sample slices from an empty volume")
    return _round_half_up(np.linspace(0, n_available - 1, n_slices))


def sample_slices(volume: CtVolume, n_slices: int) -> CtVolume:
    """Uniformly sample exactly ``n_slices`` axial slices, preserving order."""
    indices = sample_indices(volume.shape[0], n_slices)
    sz, sy, sx = volume.spacing_mm
    return CtVolume(
        voxels=volume.voxels[indices],
        spacing_mm=(sz * volume.shape[0] / n_slices, sy, sx),
        scan_id=volume.scan_id,
    )


def stack_channels(
    ct_processed: np.ndarray | CtVolume,
    lesion_processed: np.ndarray | BinaryMask | None = None,
    scan_id: str = "",
    geometry_hash: str = "",
) -> ModelInput:
    """Stack the CT (channel 0) and, when given, the binary lesion map (channel 1)."""
    ct = ct_processed.voxels if isinstance(ct_processed, CtVolume) else ct_processed
    if isinstance(ct_processed, CtVolume):
        scan_id = scan_id or ct_processed.scan_id
    channels = [np.asarray(ct, dtype=np.float32)]
    if lesion_processed is not None:
        lesion = (
            lesion_processed.voxels
            if isinstance(lesion_processed, BinaryMask)
            else np.asarray(lesion_processed)
        )
        if lesion.shape != ct.shape:
            raise GeometryError(
                f"{scan_id}: lesion shape {lesion.shape} does not match CT shape {ct.shape}"
            )
        if not np.isin(lesion, (0, 1)).all():
            raise MaskError(f"{scan_id}: lesion channel must be binary")
        channels.append(lesion.astype(np.float32))
    return ModelInput(tensor=np.stack(channels), scan_id=scan_id, geometry_hash=geometry_hash)


def preprocess_arrays(
    volume: CtVolume,
    lung_mask: BinaryMask,
    lesion_mask: BinaryMask | None,
    config: PreprocessConfig,
) -> PreprocessedScan:
    """Run clip -> resample -> crop -> sample on the CT and carry the masks along."""
    lung_mask.check_aligned(volume)
    if lesion_mask is not None:
        lesion_mask.check_aligned(volume)

    start = time.perf_counter()
    with metrics.timer("preprocess_scan"):
        ct = clip_and_normalize(volume, config)
        ct = resample(ct, config.target_spacing_mm)
        lung = resample(lung_mask, config.target_spacing_mm)
        window = lung_crop_window(lung, config, volume.scan_id)
        indices = sample_indices(len(window.kept_slices), config.n_slices)

        ct_out = apply_crop(ct.voxels, window)[indices]
        lesion_out = None
        if lesion_mask is not None:
            lesion = resample(lesion_mask, config.target_spacing_mm)
            lesion_out = apply_crop(lesion.voxels, window)[indices]

    if ct_out.shape != config.output_shape:
        raise GeometryError(
            f"{volume.scan_id}: produced {ct_out.shape}, expected {config.output_shape}"
        )
    logger.debug(
        "Preprocessed %s: %d of %d slices kept",
        volume.scan_id,
        len(window.kept_slices),
        ct.shape[0],
        extra={
            "scan_id": volume.scan_id,
            "operation": "preprocess",
            "duration_ms": round((time.perf_counter() - start) * 1000, 1),
        },
    )
    return PreprocessedScan(scan_id=volume.scan_id, ct=ct_out, lesion=lesion_out)


def preprocess_scan(
    volume: CtVolume,
    lung_mask: BinaryMask,
    lesion_mask: BinaryMask | None = None,
    config: PreprocessConfig | None = None,
) -> ModelInput:
    """Full chain producing a ``(C, n_slices, H, W)`` input in [0, 1]; C = 2 with a lesion map."""
    config = config or PreprocessConfig()
    scan = preprocess_arrays(volume, lung_mask, lesion_mask, config)
    return scan.to_model_input(
        with_lesion=lesion_mask is not None, geometry_hash=config.config_hash()
    )
