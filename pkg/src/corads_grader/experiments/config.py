"""Experiment configuration: TOML files validated by pydantic, with dotted overrides.

Example::

    name = "full-3d"
    ensemble_size = 10

    [preprocess]
    n_slices = 128

    [model]
    dimensionality = "3d"
    input_channels = 2
    pretrained = true

    [pretrained_checkpoints]
    3d = "weights/googlenet_imagenet.pth"

    [train]
    max_batches = 20000

    [paths]
    manifest = "data/manifest.csv"

Relative paths resolve against the directory of the TOML file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from corads_grader.dataset.schemas import Split
from corads_grader.errors import ConfigError
from corads_grader.imaging.preprocess import PreprocessConfig
from corads_grader.models.config import ModelConfig
from corads_grader.training.schemas import TrainConfig

logger = logging.getLogger(__name__)


class PathsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    manifest: Path | None = None
    split_file: Path | None = None
    test_manifest: Path | None = None
    runs_dir: Path = Path("runs")


class ExperimentConfig(BaseModel):
    """Everything a run needs; a run directory is fully described by this plus its seed."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "experiment"
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    ensemble_size: int = Field(10, ge=1)
    split_fractions: dict[Split, float] = {Split.TRAIN: 0.75, Split.VALIDATION: 0.25}
    split_seed: int = Field(0, ge=0)
    mask_source: Literal["auto", "external_file", "heuristic"] = "auto"
    pretrained_checkpoints: dict[Literal["2d", "3d"], Path] = {}
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        if self.model.input_geometry != self.preprocess.output_shape:
            raise ValueError(
                f"model.input_geometry {self.model.input_geometry} must equal the preprocessing "
                f"output {self.preprocess.output_shape}"
            )
        return self

    def config_hash(self) -> str:
        """SHA-256 over everything that changes results (not the name or the runs directory)."""
        payload = self.model_dump(mode="json", exclude={"name": True, "paths": {"runs_dir"}})
        canonical = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_updates(self, updates: dict[str, Any]) -> ExperimentConfig:
        """Copy with dotted-key updates applied, re-validated."""
        data = self.model_dump(mode="json")
        for key, value in updates.items():
            _set_dotted(data, key, value)
        return _validate(data, "updated config")


def _set_dotted(data: dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot set '{key}': '{part}' is not a table")
        node = child
    node[parts[-1]] = value


def parse_override(override: str) -> tuple[str, Any]:
    """``a.b=value``, with the value parsed as TOML (bare words fall back to strings)."""
    key, sep, raw = override.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like key.path=value, got '{override}'")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def _resolve_paths(data: dict[str, Any], base_dir: Path) -> None:
    def resolve(value: Any) -> Any:
        if isinstance(value, str) and value and not Path(value).is_absolute():
            return str(base_dir / value)
        return value

    paths = data.get("paths")
    if isinstance(paths, dict):
        for key, value in paths.items():
            paths[key] = resolve(value)
    checkpoints = data.get("pretrained_checkpoints")
    if isinstance(checkpoints, dict):
        for key, value in checkpoints.items():
            checkpoints[key] = resolve(value)
    model = data.get("model")
    if isinstance(model, dict) and "checkpoint_path" in model:
        model["checkpoint_path"] = resolve(model["checkpoint_path"])


def _validate(data: dict[str, Any], source: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigError(f"invalid experiment config ({source}): {details}") from None


def load_experiment(
    path: str | Path | None = None, overrides: list[str] | None = None
) -> ExperimentConfig:
    """Read a TOML experiment file (or start from defaults) and apply ``--set`` overrides."""
    data: dict[str, Any] = {}
    source = "defaults"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"experiment config not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        _resolve_paths(data, path.parent)
        source = str(path)
    for override in overrides or []:
        key, value = parse_override(override)
        _set_dotted(data, key, value)

    # Keep model geometry in step with preprocessing unless set explicitly
    model = data.setdefault("model", {})
    if isinstance(model, dict) and "input_geometry" not in model:
        try:
            preprocess = PreprocessConfig.model_validate(data.get("preprocess", {}))
            model["input_geometry"] = list(preprocess.output_shape)
        except ValidationError:
            pass  # reported by the full validation below

    config = _validate(data, source)
    logger.info("Loaded experiment '%s' (%s)", config.name, config.config_hash()[:12])
    return config


def save_experiment(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.model_dump(mode="json"), indent=2), encoding="utf-8")


def read_saved_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"run config not found: {path}")
    return _validate(json.loads(path.read_text(encoding="utf-8")), str(path))
