"""Imaging layer: CT volumes, readers and the preprocessing chain."""

from corads_grader.imaging.preprocess import (
    PreprocessConfig,
    PreprocessedScan,
    clip_and_normalize,
    crop_to_lungs,
    preprocess_arrays,
    preprocess_scan,
    resample,
    sample_slices,
    stack_channels,
)
from corads_grader.imaging.readers import read_mask, read_volume, write_mask, write_volume
from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind, ModelInput

__all__ = [
    "BinaryMask",
    "CtVolume",
    "MaskKind",
    "ModelInput",
    "PreprocessConfig",
    "PreprocessedScan",
    "clip_and_normalize",
    "crop_to_lungs",
    "preprocess_arrays",
    "preprocess_scan",
    "read_mask",
    "read_volume",
    "resample",
    "sample_slices",
    "stack_channels",
    "write_mask",
    "write_volume",
]
