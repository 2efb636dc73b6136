"""Single-model and ensemble prediction."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch

from corads_grader.dataset.schemas import ScanRecord
from corads_grader.errors import ConfigError
from corads_grader.imaging.preprocess import PreprocessConfig, preprocess_arrays
from corads_grader.imaging.volume import BinaryMask, CtVolume, ModelInput
from corads_grader.models.base import GradingNetwork
from corads_grader.models.config import HeadType, ModelConfig
from corads_grader.models.factory import forward
from corads_grader.ordinal import outputs_to_scores

logger = logging.getLogger(__name__)


class Ensemble:
    """Trained members sharing head type, input channels and input geometry."""

    def __init__(self, members: Sequence[GradingNetwork], seeds: Sequence[int] | None = None):
        if not members:
            raise ConfigError("an ensemble needs at least one member")
        first = members[0].config
        for member in members[1:]:
            other = member.config
            if other.head is not first.head:
                raise ConfigError(
                    f"mixed head types in ensemble: {first.head.value} and {other.head.value}"
                )
            if (other.input_channels, other.input_geometry) != (
                first.input_channels,
                first.input_geometry,
            ):
                raise ConfigError("ensemble members differ in input channels or geometry")
        self.members = list(members)
        self.seeds = list(seeds) if seeds is not None else list(range(len(members)))

    def __len__(self) -> int:
        return len(self.members)

    @property
    def config(self) -> ModelConfig:
        return self.members[0].config

    @property
    def head(self) -> HeadType:
        return self.config.head


def as_ensemble(predictor: GradingNetwork | Ensemble) -> Ensemble:
    return predictor if isinstance(predictor, Ensemble) else Ensemble([predictor])


@torch.no_grad()
def predict_batch(
    model: GradingNetwork, inputs: Sequence[ModelInput] | torch.Tensor
) -> np.ndarray:
    """Outputs in inference mode: ``(n,)`` scores or ``(n, 5)`` probabilities, float64."""
    model.eval()
    return forward(model, inputs).cpu().numpy().astype(np.float64)


def predict(model: GradingNetwork, model_input: ModelInput) -> np.ndarray:
    """Output for one input: a 0-d score or a 5-vector."""
    return predict_batch(model, [model_input])[0]


def mean_output(member_outputs: np.ndarray) -> np.ndarray:
    """Mean over the member axis (axis 0), exact when all members agree."""
    member_outputs = np.asarray(member_outputs, dtype=np.float64)
    first = member_outputs[0]
    return first + (member_outputs - first).mean(axis=0)


def member_outputs(
    ensemble: Ensemble, inputs: Sequence[ModelInput], n_jobs: int = 1
) -> np.ndarray:
    """``(members, n, ...)`` outputs; members may run on parallel threads."""
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outputs = list(pool.map(lambda m: predict_batch(m, inputs), ensemble.members))
    else:
        outputs = [predict_batch(m, inputs) for m in ensemble.members]
    return np.stack(outputs)


def ensemble_predict(ensemble: Ensemble, model_input: ModelInput) -> np.ndarray:
    """Mean member output for one input."""
    return mean_output(member_outputs(ensemble, [model_input]))[0]


@dataclass
class ScanPrediction:
    scan_id: str
    positive_score: float
    corads: int
    raw: np.ndarray
    members: np.ndarray = field(default_factory=lambda: np.empty(0))


def _to_prediction(
    scan_id: str, raw: np.ndarray, members: np.ndarray, head: HeadType
) -> ScanPrediction:
    scores, grades = outputs_to_scores(raw[None], head)
    return ScanPrediction(
        scan_id=scan_id,
        positive_score=float(scores[0]),
        corads=int(grades[0]),
        raw=np.atleast_1d(raw),
        members=members,
    )


def predict_scan(
    predictor: GradingNetwork | Ensemble,
    volume: CtVolume,
    lung_mask: BinaryMask,
    lesion_mask: BinaryMask | None = None,
    config: PreprocessConfig | None = None,
) -> ScanPrediction:
    """Preprocess one scan and grade it.

    Continuous heads map the score to a grade by rounding; categorical heads take the most
    probable grade (ties to the higher one) and report the CO-RADS 3-5 mass as the score.
    """
    ensemble = as_ensemble(predictor)
    config = config or PreprocessConfig()
    scan = preprocess_arrays(volume, lung_mask, lesion_mask, config)
    model_input = scan.to_model_input(ensemble.config.with_lesion, config.config_hash())
    outputs = member_outputs(ensemble, [model_input])
    return _to_prediction(volume.scan_id, mean_output(outputs)[0], outputs[:, 0], ensemble.head)


def predict_records(
    predictor: GradingNetwork | Ensemble,
    records: Sequence[ScanRecord],
    load_input: Callable[[ScanRecord], ModelInput],
    batch_size: int = 2,
    n_jobs: int = 1,
) -> list[ScanPrediction]:
    """Grade already-preprocessable records in batches."""
    ensemble = as_ensemble(predictor)
    predictions: list[ScanPrediction] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        outputs = member_outputs(ensemble, [load_input(r) for r in chunk], n_jobs)
        means = mean_output(outputs)
        for i, record in enumerate(chunk):
            predictions.append(
                _to_prediction(record.scan_id, means[i], outputs[:, i], ensemble.head)
            )
    logger.info("Predicted %d scans with %d members", len(predictions), len(ensemble))
    return predictions
