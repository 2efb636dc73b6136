"""Run directories: one trained ensemble per (config, seed).

Layout::

    <runs_dir>/<config_hash[:12]>-s<seed>/
        config.json                       full experiment config
        metadata.json                     hashes, member seeds, per-member results, timings
        members/member_00/checkpoint.safetensors
        members/member_00/history.json    written last; marks the member as finished
        members/member_00/load_report.json (pretrained runs)

Member ``i`` trains with seed ``seed + i``. Finished members are skipped on re-runs, so an
interrupted run resumes where it stopped.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from corads_grader import __version__
from corads_grader.config import get_settings
from corads_grader.dataset.manifest import load_manifest
from corads_grader.dataset.schemas import ScanRecord, Split
from corads_grader.dataset.splits import read_split_file, stratified_patient_split
from corads_grader.errors import ConfigError, DataError, GraderError
from corads_grader.experiments.cache import PreprocessCache, ScanLoader
from corads_grader.experiments.config import (
    ExperimentConfig,
    read_saved_experiment,
    save_experiment,
)
from corads_grader.inference.ensemble import Ensemble
from corads_grader.logging_config import member_context
from corads_grader.metrics import metrics
from corads_grader.models.checkpoints import load_model_weights
from corads_grader.models.factory import build_model
from corads_grader.training.schemas import TrainHistory
from corads_grader.training.trainer import train

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
METADATA_FILE = "metadata.json"
CHECKPOINT_FILE = "checkpoint.safetensors"
HISTORY_FILE = "history.json"
LOAD_REPORT_FILE = "load_report.json"


class MemberSummary(BaseModel):
    index: int
    seed: int
    best_batch: int | None = None
    best_qwk: float | None = None
    batches_run: int = 0
    stop_reason: str | None = None


class RunMetadata(BaseModel):
    name: str
    config_hash: str
    seed: int
    member_seeds: list[int]
    members: list[MemberSummary] = []
    ablation_diff: dict[str, Any] | None = None
    timings: dict[str, Any] = {}
    cache_hit_rate: float | None = None
    version: str = __version__


def run_dir_for(config: ExperimentConfig, seed: int) -> Path:
    return config.paths.runs_dir / f"{config.config_hash()[:12]}-s{seed}"


def member_dir(run_dir: Path, index: int) -> Path:
    return run_dir / "members" / f"member_{index:02d}"


def member_seeds(seed: int, ensemble_size: int) -> list[int]:
    return [seed + i for i in range(ensemble_size)]


def load_split_records(config: ExperimentConfig) -> tuple[list[ScanRecord], list[ScanRecord]]:
    """Training and validation records from the manifest and split file (or a fresh split)."""
    if config.paths.manifest is None:
        raise ConfigError("paths.manifest is required for training")
    records = load_manifest(config.paths.manifest)
    if config.paths.split_file is not None:
        split = read_split_file(config.paths.split_file)
    else:
        split = stratified_patient_split(records, config.split_fractions, config.split_seed)
    train_records = split.records_in(records, Split.TRAIN)
    val_records = split.records_in(records, Split.VALIDATION)
    if not train_records or not val_records:
        raise DataError(
            f"split leaves {len(train_records)} training and {len(val_records)} validation scans"
        )
    return train_records, val_records


def make_loader(config: ExperimentConfig, records: list[ScanRecord]) -> ScanLoader:
    settings = get_settings().cache
    cache = PreprocessCache(settings.dir, config.preprocess, settings.enabled, config.mask_source)
    return ScanLoader(records, cache, config.model.with_lesion)


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    os.replace(tmp, path)


def read_metadata(run_dir: str | Path) -> RunMetadata:
    path = Path(run_dir) / METADATA_FILE
    if not path.is_file():
        raise DataError(f"not a run directory (no {METADATA_FILE}): {run_dir}")
    return RunMetadata.model_validate_json(path.read_text(encoding="utf-8"))


def _prepare_run_dir(config: ExperimentConfig, seed: int) -> Path:
    run_dir = run_dir_for(config, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    config_path = run_dir / CONFIG_FILE
    if config_path.is_file():
        stored = read_saved_experiment(config_path)
        if stored.config_hash() != config.config_hash():
            raise ConfigError(f"{run_dir} holds a run of a different config")
    else:
        save_experiment(config, config_path)
    return run_dir


def train_run(
    config: ExperimentConfig, seed: int = 0, ablation_diff: dict[str, Any] | None = None
) -> Path:
    """Train (or finish training) every ensemble member; return the run directory."""
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}")
    run_dir = _prepare_run_dir(config, seed)
    seeds = member_seeds(seed, config.ensemble_size)
    train_records, val_records = load_split_records(config)
    loader = make_loader(config, train_records + val_records)

    summaries = []
    for index, member_seed in enumerate(seeds):
        directory = member_dir(run_dir, index)
        history_path = directory / HISTORY_FILE
        if history_path.is_file() and (directory / CHECKPOINT_FILE).is_file():
            logger.info("Member %d already trained, skipping", index, extra={"member": index})
            history = TrainHistory.load(history_path)
        else:
            try:
                with member_context(index):
                    model = build_model(config.model, seed=member_seed)
                    result = train(
                        model,
                        train_records,
                        val_records,
                        config.train.model_copy(update={"seed": member_seed}),
                        loader,
                        checkpoint_path=directory / CHECKPOINT_FILE,
                        member=index,
                    )
            except GraderError as exc:
                exc.add_note(f"while training member {index} (seed {member_seed})")
                raise
            if model.load_report is not None:
                _write_json(directory / LOAD_REPORT_FILE, model.load_report.model_dump(mode="json"))
            history = result.history
            history.save(history_path)
        summaries.append(
            MemberSummary(
                index=index,
                seed=member_seed,
                best_batch=history.best_batch,
                best_qwk=history.best_qwk,
                batches_run=history.batches_run,
                stop_reason=history.stop_reason.value if history.stop_reason else None,
            )
        )

    metadata = RunMetadata(
        name=config.name,
        config_hash=config.config_hash(),
        seed=seed,
        member_seeds=seeds,
        members=summaries,
        ablation_diff=ablation_diff,
        timings=metrics.snapshot()["timers"],
        cache_hit_rate=metrics.hit_rate("cache"),
    )
    _write_json(run_dir / METADATA_FILE, metadata.model_dump(mode="json"))
    logger.info("Run complete: %s (%d members)", run_dir, len(seeds))
    return run_dir


def load_ensemble(run_dir: str | Path) -> tuple[Ensemble, ExperimentConfig, list[int]]:
    """Finished members of a run, its config, and the seeds of members that are missing."""
    run_dir = Path(run_dir)
    config = read_saved_experiment(run_dir / CONFIG_FILE)
    metadata_path = run_dir / METADATA_FILE
    seed = read_metadata(run_dir).seed if metadata_path.is_file() else 0
    model_config = config.model.model_copy(update={"pretrained": False})

    members, seeds, missing = [], [], []
    for index, member_seed in enumerate(member_seeds(seed, config.ensemble_size)):
        checkpoint = member_dir(run_dir, index) / CHECKPOINT_FILE
        if not checkpoint.is_file():
            missing.append(member_seed)
            continue
        model = build_model(model_config, seed=member_seed)
        load_model_weights(model, checkpoint)
        members.append(model)
        seeds.append(member_seed)
    if not members:
        raise DataError(f"{run_dir} has no trained members")
    if missing:
        logger.warning(
            "Run %s is missing %d members (seeds %s); evaluating the rest",
            run_dir,
            len(missing),
            ", ".join(map(str, missing)),
        )
    return Ensemble(members, seeds), config, missing


def mean_best_batch(run_dir: str | Path) -> float | None:
    summaries = [m.best_batch for m in read_metadata(run_dir).members if m.best_batch is not None]
    return sum(summaries) / len(summaries) if summaries else None
