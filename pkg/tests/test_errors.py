"""Tests for the exception hierarchy and its exit codes."""

import pytest

from corads_grader.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GeometryError,
    GraderError,
    LabelError,
    ManifestError,
    MaskError,
    MetricUndefinedError,
    SplitError,
    TrainingDivergedError,
    TrainingError,
)


class TestExitCodes:
    def test_families(self):
        assert ConfigError("x").exit_code == 1
        assert DataError("x").exit_code == 2
        assert TrainingError("x").exit_code == 3
        assert GraderError("x").exit_code == 3

    @pytest.mark.parametrize(
        "cls", [LabelError, SplitError, GeometryError, MaskError, CheckpointError]
    )
    def test_data_subclasses(self, cls):
        assert issubclass(cls, DataError)
        assert cls("x").exit_code == 2

    def test_metric_undefined_is_data_error(self):
        assert MetricUndefinedError("single class").exit_code == 2


class TestManifestError:
    def test_row_in_message(self):
        exc = ManifestError("label 7 is not legal", row=4)
        assert exc.row == 4
        assert str(exc) == "row 4: label 7 is not legal"

    def test_without_row(self):
        exc = ManifestError("manifest not found")
        assert exc.row is None
        assert str(exc) == "manifest not found"


class TestTrainingDivergedError:
    def test_carries_batch_and_learning_rate(self):
        exc = TrainingDivergedError(batch=12, learning_rate=1e-4, loss=float("nan"))
        assert exc.batch == 12
        assert exc.learning_rate == 1e-4
        assert "12" in str(exc)
        assert isinstance(exc, TrainingError)
