"""CT volumes, binary masks and the fixed-geometry network input."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from corads_grader.errors import GeometryError, MaskError

Spacing = tuple[float, float, float]


def _check_spacing(spacing_mm: Spacing) -> Spacing:
    spacing = tuple(float(s) for s in spacing_mm)
    if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
        raise GeometryError(f"voxel spacing must be three positive values, got {spacing_mm}")
    return spacing  # type: ignore[return-value]


class MaskKind(str, Enum):
    LUNG = "lung"
    LESION = "lesion"


@dataclass(frozen=True)
class CtVolume:
    """A CT scan in Hounsfield units, axis order (z, y, x)."""

    voxels: np.ndarray
    spacing_mm: Spacing
    scan_id: str

    def __post_init__(self) -> None:
        if self.voxels.ndim != 3 or self.voxels.size == 0:
            raise GeometryError(
                f"{self.scan_id}: expected a non-empty 3D grid, got shape {self.voxels.shape}"
            )
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape  # type: ignore[return-value]

    @property
    def extent_mm(self) -> tuple[float, float, float]:
        extent = tuple(n * s for n, s in zip(self.shape, self.spacing_mm))
        return extent  # type: ignore[return-value]


@dataclass(frozen=True)
class BinaryMask:
    """A {0, 1} grid aligned with a companion :class:`CtVolume`."""

    voxels: np.ndarray
    spacing_mm: Spacing
    kind: MaskKind

    def __post_init__(self) -> None:
        if self.voxels.ndim != 3:
            raise GeometryError(f"{self.kind.value} mask must be 3D, got {self.voxels.shape}")
        object.__setattr__(self, "voxels", np.asarray(self.voxels != 0, dtype=np.uint8))
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape  # type: ignore[return-value]

    @property
    def is_empty(self) -> bool:
        return not self.voxels.any()

    def check_aligned(self, volume: CtVolume) -> None:
        """Raise :class:`MaskError` unless shape and spacing match ``volume``."""
        if self.shape != volume.shape:
            raise MaskError(
                f"{volume.scan_id}: {self.kind.value} mask shape {self.shape} "
                f"does not match volume shape {volume.shape}"
            )
        if not np.allclose(self.spacing_mm, volume.spacing_mm, rtol=1e-4, atol=1e-6):
            raise MaskError(
                f"{volume.scan_id}: {self.kind.value} mask spacing {self.spacing_mm} "
                f"does not match volume spacing {volume.spacing_mm}"
            )


@dataclass(frozen=True)
class ModelInput:
    """Network input tensor ``(channels, depth, height, width)`` with values in [0, 1].

    Channel 0 is always the normalized CT; channel 1, when present, is the binary lesion map.
    """

    tensor: np.ndarray
    scan_id: str = ""
    geometry_hash: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.tensor.ndim != 4 or self.tensor.shape[0] not in (1, 2):
            raise GeometryError(
                f"{self.scan_id}: model input must be (1 or 2, D, H, W), got {self.tensor.shape}"
            )

    @property
    def channels(self) -> int:
        return int(self.tensor.shape[0])

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.tensor.shape[1:]  # type: ignore[return-value]
