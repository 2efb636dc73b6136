"""Ablation grids over the four switchable components of the grading pipeline.

Each axis has an "on" state (the full model) and an "off" state:

=================  ========================  ===============================
axis               on                        off
=================  ========================  ===============================
``pretrained``     ImageNet initialization   random initialization
``lesion``         CT + lesion map input     CT only
``head``           continuous output         five-way categorical output
``dimensionality`` 3D network                2D slice network
=================  ========================  ===============================

A point fixes some axes; the rest keep the base config's values, so a point differs from the
base only in the components it switches. The diff is stored in each run's metadata.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from corads_grader.errors import ConfigError
from corads_grader.experiments.config import ExperimentConfig
from corads_grader.experiments.runs import train_run
from corads_grader.metrics import metrics
from corads_grader.models.config import Dimensionality, HeadType

logger = logging.getLogger(__name__)


class AblationAxis(str, Enum):
    PRETRAINED = "pretrained"
    LESION = "lesion"
    HEAD = "head"
    DIMENSIONALITY = "dimensionality"


@dataclass(frozen=True)
class AblationPoint:
    """Axis states for one run; ``True`` means the full-model setting."""

    states: dict[AblationAxis, bool] = field(default_factory=dict)

    def apply(self, base: ExperimentConfig) -> ExperimentConfig:
        model = base.model
        pretrained = self.states.get(AblationAxis.PRETRAINED, model.pretrained)
        with_lesion = self.states.get(AblationAxis.LESION, model.with_lesion)
        if AblationAxis.HEAD in self.states:
            head = HeadType.CONTINUOUS if self.states[AblationAxis.HEAD] else HeadType.CATEGORICAL
        else:
            head = model.head
        if AblationAxis.DIMENSIONALITY in self.states:
            on = self.states[AblationAxis.DIMENSIONALITY]
            dimensionality = Dimensionality.D3 if on else Dimensionality.D2
        else:
            dimensionality = model.dimensionality

        checkpoint = None
        if pretrained:
            checkpoint = base.pretrained_checkpoints.get(dimensionality.value)
            if checkpoint is None and dimensionality is model.dimensionality:
                checkpoint = model.checkpoint_path
            if checkpoint is None:
                raise ConfigError(
                    f"ablation point '{self.name(base)}' is pretrained but no checkpoint is "
                    f"configured for {dimensionality.value} (pretrained_checkpoints."
                    f"{dimensionality.value})"
                )
        updates = {
            "name": f"{base.name}-{self.name(base)}",
            "model.pretrained": pretrained,
            "model.checkpoint_path": str(checkpoint) if checkpoint is not None else None,
            "model.input_channels": 2 if with_lesion else 1,
            "model.head": head.value,
            "model.dimensionality": dimensionality.value,
        }
        return base.with_updates(updates)

    def name(self, base: ExperimentConfig) -> str:
        model = base.model
        pretrained = self.states.get(AblationAxis.PRETRAINED, model.pretrained)
        lesion = self.states.get(AblationAxis.LESION, model.with_lesion)
        continuous = self.states.get(AblationAxis.HEAD, model.head is HeadType.CONTINUOUS)
        is_3d = self.states.get(
            AblationAxis.DIMENSIONALITY, model.dimensionality is Dimensionality.D3
        )
        missing = [
            label
            for label, on in (
                ("no-pretrained", pretrained),
                ("no-lesion", lesion),
                ("categorical", continuous),
            )
            if not on
        ]
        dim = "3d" if is_3d else "2d"
        return "-".join([dim, *missing]) if missing else f"full-{dim}"


def ablation_grid(axes: list[AblationAxis] | list[str]) -> list[AblationPoint]:
    """Every on/off combination of ``axes`` (2**n points, the all-on point first)."""
    axes = [AblationAxis(a) for a in axes]
    if len(set(axes)) != len(axes):
        raise ConfigError(f"ablation axes repeat: {[a.value for a in axes]}")
    return [
        AblationPoint(dict(zip(axes, combo, strict=True)))
        for combo in itertools.product((True, False), repeat=len(axes))
    ]


def component_grid() -> list[AblationPoint]:
    """Full 3D, 3D without each component in turn, and full 2D."""
    full = dict.fromkeys(AblationAxis, True)
    points = [AblationPoint(full)]
    for axis in (AblationAxis.PRETRAINED, AblationAxis.LESION, AblationAxis.HEAD):
        points.append(AblationPoint({**full, axis: False}))
    points.append(AblationPoint({**full, AblationAxis.DIMENSIONALITY: False}))
    return points


def _flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def config_diff(base: ExperimentConfig, other: ExperimentConfig) -> dict[str, list[Any]]:
    """Dotted keys whose values differ, as ``[base_value, other_value]`` (names ignored)."""
    left = _flatten(base.model_dump(mode="json", exclude={"name"}))
    right = _flatten(other.model_dump(mode="json", exclude={"name"}))
    return {
        key: [left.get(key), right.get(key)]
        for key in sorted(left.keys() | right.keys())
        if left.get(key) != right.get(key)
    }


@dataclass
class AblationResult:
    run_dirs: dict[str, Path]
    cache_hit_rate: float | None


def run_ablation(
    base: ExperimentConfig, points: list[AblationPoint], seed: int = 0
) -> AblationResult:
    """Train one run per point; points share the preprocessing cache."""
    configs = {point.name(base): point.apply(base) for point in points}
    run_dirs: dict[str, Path] = {}
    for name, config in configs.items():
        diff = config_diff(base, config)
        logger.info("Ablation point %s: %d changed settings", name, len(diff))
        with metrics.timer(f"ablation.{name}"):
            run_dirs[name] = train_run(config, seed=seed, ablation_diff=diff)
    hit_rate = metrics.hit_rate("cache")
    if hit_rate is not None:
        logger.info("Preprocessing cache hit rate: %.1f%%", 100 * hit_rate)
    return AblationResult(run_dirs=run_dirs, cache_hit_rate=hit_rate)
