"""The training loop: Adam, balanced sampling, augmentation and QWK early stopping."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from corads_grader.config import get_settings
from corads_grader.dataset.schemas import LabelScheme, ScanRecord
from corads_grader.errors import LabelError, TrainingDivergedError
from corads_grader.evaluation.stats import qwk
from corads_grader.imaging.volume import ModelInput
from corads_grader.metrics import metrics
from corads_grader.models.base import GradingNetwork
from corads_grader.models.checkpoints import save_model
from corads_grader.models.factory import batch_tensor
from corads_grader.ordinal import outputs_to_scores, training_loss
from corads_grader.seeding import rng_for, torch_seed_for
from corads_grader.training.augment import augment
from corads_grader.training.early_stopping import EarlyStopping
from corads_grader.training.sampling import SampleKey, StreamBatchSampler, balanced_resample
from corads_grader.training.schemas import (
    AugmentConfig,
    EvalRecord,
    StopReason,
    TrainConfig,
    TrainHistory,
)

logger = logging.getLogger(__name__)

InputLoader = Callable[[ScanRecord], ModelInput]


class AugmentedScans(Dataset):
    """Loads and augments the scan behind each ``(record_index, batch, slot)`` key."""

    def __init__(
        self,
        records: list[ScanRecord],
        load_input: InputLoader,
        augmentation: AugmentConfig,
        seed: int,
    ) -> None:
        self.records = records
        self.load_input = load_input
        self.augmentation = augmentation
        self.seed = seed

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, key: SampleKey) -> tuple[torch.Tensor, int]:
        index, batch, slot = key
        record = self.records[index]
        item = self.load_input(record)
        if not self.augmentation.is_identity:
            item = augment(item, self.augmentation, rng_for(self.seed, "augment", batch, slot))
        return torch.from_numpy(np.ascontiguousarray(item.tensor)), record.label.value


@dataclass
class TrainResult:
    history: TrainHistory
    best_state: dict[str, torch.Tensor]


def _require_corads(records: list[ScanRecord], role: str) -> None:
    schemes = {r.scheme for r in records}
    if schemes - {LabelScheme.CORADS}:
        names = ", ".join(sorted(s.value for s in schemes))
        raise LabelError(f"{role} records must be CO-RADS graded, got {names}")


@torch.no_grad()
def validate(
    model: GradingNetwork,
    records: list[ScanRecord],
    load_input: InputLoader,
    batch_size: int = 2,
) -> tuple[float, float, np.ndarray]:
    """QWK, mean loss and predicted grades of ``model`` on ``records`` (no augmentation)."""
    was_training = model.training
    model.eval()
    device = next(model.parameters()).device
    head = model.config.head
    grades, losses = [], []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        x = batch_tensor([load_input(r) for r in chunk], device)
        truth = torch.tensor([r.label.value for r in chunk], device=device)
        logits = model(x)
        losses.append(float(training_loss(logits, truth, head)) * len(chunk))
        outputs = model.activate(logits).cpu().numpy()
        grades.append(outputs_to_scores(outputs, head)[1])
    model.train(was_training)
    predicted = np.concatenate(grades)
    score = qwk([r.label.value for r in records], predicted)
    return score, sum(losses) / len(records), predicted


def train(
    model: GradingNetwork,
    train_records: list[ScanRecord],
    val_records: list[ScanRecord],
    config: TrainConfig,
    load_input: InputLoader,
    checkpoint_path: str | Path | None = None,
    member: int | None = None,
) -> TrainResult:
    """Train ``model`` in place and leave it holding the weights with the best validation QWK.

    Validation runs every ``eval_every_batches``; training stops after ``patience_batches``
    batches without a strict QWK improvement or at ``max_batches``.
    """
    _require_corads(train_records, "training")
    _require_corads(val_records, "validation")
    runtime = get_settings().runtime
    if runtime.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
    torch.manual_seed(torch_seed_for(config.seed, "dropout"))

    device = torch.device(runtime.torch_device())
    model.to(device)
    model.train()
    head = model.config.head
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=config.learning_rate,
        betas=(config.adam_beta1, config.adam_beta2),
    )
    sampler = StreamBatchSampler(
        train_records,
        config.batch_size,
        config.seed,
        config.max_batches,
        balanced=config.balance_train,
    )
    loader = DataLoader(
        AugmentedScans(train_records, load_input, config.augmentation, config.seed),
        batch_sampler=sampler,
        num_workers=runtime.num_workers,
    )
    monitor = balanced_resample(val_records) if config.balance_validation else val_records
    stopper = EarlyStopping(config.patience_batches)
    history = TrainHistory(seed=config.seed)
    log_extra = {"member": member} if member is not None else {}

    running: list[float] = []
    for batch, (x, grades) in enumerate(loader, start=1):
        with metrics.timer("train_batch"):
            x = x.to(device)
            grades = grades.to(device)
            optimizer.zero_grad(set_to_none=True)
            loss = training_loss(model(x), grades, head)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(batch, config.learning_rate, float(loss))
            loss.backward()
            optimizer.step()
        running.append(float(loss))
        history.batches_run = batch

        if batch % config.eval_every_batches:
            continue
        with metrics.timer("validation"):
            val_qwk, val_loss, _ = validate(model, monitor, load_input, config.batch_size)
        history.records.append(
            EvalRecord(
                batch=batch,
                val_qwk=val_qwk,
                train_loss=float(np.mean(running)),
                val_loss=val_loss,
            )
        )
        running = []
        stopper(val_qwk, batch, model)
        train_loss = history.records[-1].train_loss
        logger.info(
            "Batch %d: validation QWK %.4f, loss %.4f",
            batch,
            val_qwk,
            train_loss,
            extra={**log_extra, "batch": batch, "qwk": val_qwk, "loss": train_loss},
        )
        if stopper.early_stop:
            history.stop_reason = StopReason.PATIENCE
            break

    if history.stop_reason is None:
        history.stop_reason = StopReason.MAX_BATCHES
    if stopper.best_state is not None:
        model.load_state_dict(stopper.best_state)
    history.best_batch = stopper.best_batch
    history.best_qwk = stopper.best_score
    best_state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}

    if checkpoint_path is not None:
        save_model(
            model,
            checkpoint_path,
            provenance=f"trained-{model.config.dimensionality.value}",
            metadata={"seed": str(config.seed), "best_batch": str(history.best_batch)},
        )
        history.best_checkpoint = str(checkpoint_path)

    logger.info(
        "Training stopped (%s) after %d batches; best QWK %s at batch %s",
        history.stop_reason.value,
        history.batches_run,
        f"{history.best_qwk:.4f}" if history.best_qwk is not None else "n/a",
        history.best_batch,
        extra=log_extra,
    )
    return TrainResult(history=history, best_state=best_state)
