"""Tests for process settings."""

from pathlib import Path

import pytest
from pydantic import ValidationError

from corads_grader.config import RuntimeSettings, Settings, get_settings, reset_settings


class TestSettings:
    def test_logging_defaults(self, monkeypatch):
        monkeypatch.delenv("CORADS_LOG_LEVEL", raising=False)
        monkeypatch.delenv("CORADS_LOG_FORMAT", raising=False)
        s = Settings()
        assert s.logging.level == "INFO"
        assert s.logging.format == "json"

    def test_cache_dir_from_environment(self, tmp_path):
        # Set by the autouse fixture
        assert Settings().cache.dir == tmp_path / "cache"
        assert Settings().cache.enabled is True

    def test_cache_dir_default(self, monkeypatch):
        monkeypatch.delenv("CORADS_CACHE_DIR")
        assert Settings().cache.dir == Path.home() / ".cache" / "corads-grader"

    def test_runtime_from_environment(self, monkeypatch):
        monkeypatch.setenv("CORADS_NUM_WORKERS", "3")
        monkeypatch.setenv("CORADS_DETERMINISTIC", "true")
        s = Settings()
        assert s.runtime.num_workers == 3
        assert s.runtime.deterministic is True
        assert s.runtime.device == "cpu"

    def test_unknown_device_rejected(self):
        with pytest.raises(ValidationError, match="unknown device"):
            RuntimeSettings(device="tpu")

    def test_negative_workers_rejected(self):
        with pytest.raises(ValidationError):
            RuntimeSettings(num_workers=-1)


class TestTorchDevice:
    def test_explicit_device_is_returned(self):
        assert RuntimeSettings(device="cpu").torch_device() == "cpu"
        assert RuntimeSettings(device="cuda:1").torch_device() == "cuda:1"

    def test_auto_matches_availability(self):
        import torch

        expected = "cuda" if torch.cuda.is_available() else "cpu"
        assert RuntimeSettings(device="auto").torch_device() == expected


class TestSingleton:
    def test_get_settings_is_cached(self):
        assert get_settings() is get_settings()

    def test_reset_rereads_environment(self, monkeypatch):
        first = get_settings()
        monkeypatch.setenv("CORADS_NUM_WORKERS", "2")
        assert get_settings().runtime.num_workers == 0
        reset_settings()
        second = get_settings()
        assert second is not first
        assert second.runtime.num_workers == 2
