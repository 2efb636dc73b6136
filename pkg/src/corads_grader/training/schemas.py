"""Training configuration and history records."""

from __future__ import annotations

import json
import os
from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Range = tuple[float, float]


def _ordered(name: str, value: Range) -> None:
    if value[0] > value[1]:
        raise ValueError(f"{name}: lower bound {value[0]} exceeds upper bound {value[1]}")


class AugmentConfig(BaseModel):
    """Random augmentation magnitudes.

    Zoom, rotation, shear and the elastic field act in the axial plane; translation acts on
    (z, y, x); Gaussian noise is added to the CT channel only.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    zoom_range: Range = (0.9, 1.1)
    rotation_deg: Range = (-10.0, 10.0)
    shear_deg: Range = (-5.0, 5.0)
    elastic_grid: int = Field(4, ge=2)
    elastic_sigma_voxels: float = Field(4.0, ge=0)
    elastic_magnitude_voxels: float = Field(8.0, ge=0)
    translation_voxels: tuple[Range, Range, Range] = ((-8.0, 8.0), (-8.0, 8.0), (-8.0, 8.0))
    noise_sigma: float = Field(0.02, ge=0)

    @model_validator(mode="after")
    def _check(self) -> AugmentConfig:
        _ordered("zoom_range", self.zoom_range)
        _ordered("rotation_deg", self.rotation_deg)
        _ordered("shear_deg", self.shear_deg)
        for axis, bounds in zip("zyx", self.translation_voxels):
            _ordered(f"translation_voxels[{axis}]", bounds)
        if self.zoom_range[0] <= 0:
            raise ValueError("zoom_range must be positive")
        return self

    @classmethod
    def identity(cls) -> AugmentConfig:
        return cls(
            zoom_range=(1.0, 1.0),
            rotation_deg=(0.0, 0.0),
            shear_deg=(0.0, 0.0),
            elastic_magnitude_voxels=0.0,
            translation_voxels=((0.0, 0.0), (0.0, 0.0), (0.0, 0.0)),
            noise_sigma=0.0,
        )

    @property
    def is_identity(self) -> bool:
        return not self.enabled or (
            self.zoom_range == (1.0, 1.0)
            and self.rotation_deg == (0.0, 0.0)
            and self.shear_deg == (0.0, 0.0)
            and self.elastic_magnitude_voxels == 0.0
            and all(b == (0.0, 0.0) for b in self.translation_voxels)
            and self.noise_sigma == 0.0
        )


class TrainConfig(BaseModel):
    """Optimizer, stopping and sampling settings; patience is counted in training batches."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(1e-4, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    batch_size: int = Field(2, ge=1)
    patience_batches: int = Field(10_000, ge=1)
    eval_every_batches: int = Field(500, ge=1)
    max_batches: int = Field(100_000, ge=1)
    seed: int = Field(0, ge=0)
    balance: Literal["train", "validation", "both"] = "train"
    augmentation: AugmentConfig = Field(default_factory=AugmentConfig)

    @property
    def balance_train(self) -> bool:
        return self.balance in ("train", "both")

    @property
    def balance_validation(self) -> bool:
        return self.balance in ("validation", "both")


class StopReason(str, Enum):
    PATIENCE = "patience"
    MAX_BATCHES = "max_batches"


class EvalRecord(BaseModel):
    batch: int
    val_qwk: float
    train_loss: float
    val_loss: float


class TrainHistory(BaseModel):
    """Validation records of one training run and where its best weights came from."""

    seed: int
    records: list[EvalRecord] = []
    best_batch: int | None = None
    best_qwk: float | None = None
    best_checkpoint: str | None = None
    stop_reason: StopReason | None = None
    batches_run: int = 0

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.model_dump(mode="json"), indent=2), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> TrainHistory:
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
