"""Exception hierarchy shared by the library and the CLI.

The CLI maps each family to an exit code: configuration problems to 1, data problems to 2 and
runtime failures to 3.
"""

from __future__ import annotations


class GraderError(Exception):
    """Base class for all errors raised by corads_grader."""

    exit_code = 3


class ConfigError(GraderError):
    """Invalid experiment configuration or command-line usage."""

    exit_code = 1


class DataError(GraderError):
    """Problem with input data: manifests, labels, volumes, masks or geometry."""

    exit_code = 2


class ManifestError(DataError):
    """A manifest could not be read or one of its rows is invalid."""

    def __init__(self, message: str, row: int | None = None) -> None:
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class LabelError(DataError):
    """A label value is illegal under its scheme or cannot be converted."""


class SplitError(DataError):
    """Stratified splitting is impossible for the given records."""


class GeometryError(DataError):
    """Array shapes or spacings are inconsistent with what an operation needs."""


class MaskError(DataError):
    """A lung or lesion mask is missing, empty or misaligned."""


class CheckpointError(DataError):
    """A checkpoint cannot be read or mapped onto the target network."""


class MetricUndefinedError(DataError):
    """A metric is not defined on the given sample (e.g. a single class)."""


class TrainingError(GraderError):
    """Failure while training a model."""

    exit_code = 3


class TrainingDivergedError(TrainingError):
    """The training loss became non-finite."""

    def __init__(self, batch: int, learning_rate: float, loss: float) -> None:
        self.batch = batch
        self.learning_rate = learning_rate
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss} at batch {batch} (learning_rate={learning_rate:g})"
        )
