"""Process-level settings using Pydantic Settings.

Experiment parameters (preprocessing geometry, model, training) live in TOML experiment files,
see :mod:`corads_grader.experiments.config`. This module only holds what belongs to the
process: logging, the preprocessing cache location and runtime knobs.
"""

from __future__ import annotations

from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class LoggingSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="CORADS_LOG_", extra="ignore"
    )

    level: str = "INFO"
    format: str = Field("json", description="Log format: 'json' or 'text'")


class CacheSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="CORADS_CACHE_",
        populate_by_name=True,
        extra="ignore",
    )

    dir: Path = Field(
        default_factory=lambda: Path.home() / ".cache" / "corads-grader",
        validation_alias="CORADS_CACHE_DIR",
    )
    enabled: bool = True


class RuntimeSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="CORADS_", extra="ignore"
    )

    device: str = Field("auto", description="auto | cpu | cuda")
    num_workers: int = Field(0, ge=0, description="Background data-loading workers")
    deterministic: bool = False

    @field_validator("device")
    @classmethod
    def _known_device(cls, value: str) -> str:
        if value != "auto" and value != "cpu" and not value.startswith("cuda"):
            raise ValueError(f"unknown device '{value}'")
        return value

    def torch_device(self) -> str:
        """Concrete device name; ``auto`` picks CUDA when available."""
        if self.device != "auto":
            return self.device
        import torch

        return "cuda" if torch.cuda.is_available() else "cpu"


class Settings(BaseSettings):
    """Root settings aggregating all sub-configurations."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    logging: LoggingSettings = Field(default_factory=LoggingSettings)
    cache: CacheSettings = Field(default_factory=CacheSettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)


_settings: Settings | None = None


def get_settings() -> Settings:
    """Return cached settings singleton."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the cached singleton so the next call re-reads the environment."""
    global _settings
    _settings = None
