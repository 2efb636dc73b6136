"""Network configuration shared by the 2D and 3D grading models."""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

N_GRADES = 5


class Dimensionality(str, Enum):
    D2 = "2d"
    D3 = "3d"


class HeadType(str, Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


class ModelConfig(BaseModel):
    """Which network to build and how to initialize it.

    ``width_scale`` multiplies every channel count and exists for desk-scale runs; 1.0 gives the
    reference Inception V1 / ResNet-50 widths. ``checkpoint_path`` is required when
    ``pretrained`` is set.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    dimensionality: Dimensionality = Dimensionality.D3
    input_channels: Literal[1, 2] = 2
    head: HeadType = HeadType.CONTINUOUS
    pretrained: bool = False
    checkpoint_path: Path | None = None
    width_scale: float = Field(1.0, gt=0, le=1)
    input_geometry: tuple[int, int, int] = (128, 240, 240)
    dropout: float = Field(0.5, ge=0, lt=1)
    gradient_checkpointing: bool = False

    @model_validator(mode="after")
    def _check(self) -> ModelConfig:
        if min(self.input_geometry) < 1:
            raise ValueError(f"input_geometry must be positive, got {self.input_geometry}")
        if self.pretrained and self.checkpoint_path is None:
            raise ValueError("pretrained=true needs a checkpoint_path")
        return self

    @property
    def n_outputs(self) -> int:
        return 1 if self.head is HeadType.CONTINUOUS else N_GRADES

    @property
    def with_lesion(self) -> bool:
        return self.input_channels == 2

    def scaled(self, channels: int) -> int:
        return max(1, int(channels * self.width_scale))

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
