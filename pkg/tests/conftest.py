"""Shared fixtures for corads-grader tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from corads_grader.config import Settings, reset_settings
from corads_grader.dataset.manifest import load_manifest
from corads_grader.dataset.schemas import GradeLabel, LabelScheme, ScanRecord, Split
from corads_grader.dataset.splits import stratified_patient_split, write_split_file
from corads_grader.experiments.config import ExperimentConfig, PathsConfig
from corads_grader.experiments.synth import SyntheticSpec, generate_dataset
from corads_grader.imaging.preprocess import PreprocessConfig
from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind
from corads_grader.metrics import metrics
from corads_grader.models.config import Dimensionality, HeadType, ModelConfig
from corads_grader.training.schemas import AugmentConfig, TrainConfig

TINY_GEOMETRY = (16, 32, 32)


@pytest.fixture(autouse=True)
def _isolated_process(tmp_path, monkeypatch):
    """Fresh settings (CPU, cache under tmp_path) and empty metrics for every test."""
    monkeypatch.setenv("CORADS_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("CORADS_DEVICE", "cpu")
    monkeypatch.setenv("CORADS_NUM_WORKERS", "0")
    reset_settings()
    metrics.reset()
    yield
    reset_settings()


@pytest.fixture()
def settings() -> Settings:
    return Settings()


@pytest.fixture()
def tiny_spec() -> SyntheticSpec:
    """20 small phantoms, four per grade."""
    return SyntheticSpec(n_scans=20, shape=(24, 48, 48), spacing_mm=(3.0, 2.0, 2.0), seed=0)


@pytest.fixture()
def tiny_preprocess() -> PreprocessConfig:
    return PreprocessConfig(target_spacing_mm=3.0, crop_hw=TINY_GEOMETRY[1:], n_slices=16)


@pytest.fixture()
def tiny_model_config():
    """Factory for width-scaled models on the tiny geometry."""

    def make(
        dimensionality: Dimensionality = Dimensionality.D3,
        head: HeadType = HeadType.CONTINUOUS,
        input_channels: int = 2,
        **kwargs,
    ) -> ModelConfig:
        return ModelConfig(
            dimensionality=dimensionality,
            head=head,
            input_channels=input_channels,
            width_scale=0.125,
            input_geometry=TINY_GEOMETRY,
            **kwargs,
        )

    return make


def ellipsoid_phantom(
    shape=(40, 64, 64), spacing=(2.5, 1.5, 1.5), scan_id: str = "phantom", lesion: bool = True
) -> tuple[CtVolume, BinaryMask, BinaryMask]:
    """Body cylinder with two lungs and, optionally, a ground-glass blob in the left lung."""
    z, y, x = np.ogrid[: shape[0], : shape[1], : shape[2]]
    d, h, w = shape
    body = ((y - h / 2) / (0.42 * h)) ** 2 + ((x - w / 2) / (0.46 * w)) ** 2 <= 1
    body = np.broadcast_to(body, shape)
    lungs = np.zeros(shape, dtype=bool)
    for cx in (0.3 * w, 0.7 * w):
        lungs |= (
            ((z - d / 2) / (0.35 * d)) ** 2
            + ((y - h / 2) / (0.3 * h)) ** 2
            + ((x - cx) / (0.15 * w)) ** 2
        ) <= 1
    hu = np.where(body, 40.0, -1000.0).astype(np.float32)
    hu[lungs] = -850.0
    blob = np.zeros(shape, dtype=bool)
    if lesion:
        blob = (
            ((z - d / 2) / 3) ** 2 + ((y - h / 2) / 3) ** 2 + ((x - 0.3 * w) / 3) ** 2 <= 1
        ) & lungs
        hu[blob] = -550.0
    return (
        CtVolume(voxels=hu, spacing_mm=spacing, scan_id=scan_id),
        BinaryMask(voxels=lungs, spacing_mm=spacing, kind=MaskKind.LUNG),
        BinaryMask(voxels=blob, spacing_mm=spacing, kind=MaskKind.LESION),
    )


@pytest.fixture()
def phantom():
    return ellipsoid_phantom()


def make_records(labels: list[int], scheme: LabelScheme = LabelScheme.CORADS) -> list[ScanRecord]:
    """One scan per patient with the given label values (no files behind them)."""
    return [
        ScanRecord(
            scan_id=f"s{i:03d}",
            patient_id=f"p{i:03d}",
            volume_path=Path(f"/nonexistent/s{i:03d}.raw"),
            label=GradeLabel(scheme=scheme, value=v),
        )
        for i, v in enumerate(labels)
    ]


@pytest.fixture()
def synthetic_dataset(tmp_path, tiny_spec) -> tuple[Path, Path]:
    """Manifest and a train/validation/test split file for the tiny phantom set."""
    manifest = generate_dataset(tiny_spec, tmp_path / "synth")
    records = load_manifest(manifest)
    split = stratified_patient_split(
        records, {Split.TRAIN: 0.5, Split.VALIDATION: 0.25, Split.TEST: 0.25}, seed=0
    )
    split_file = tmp_path / "synth" / "split.csv"
    write_split_file(split, split_file)
    return manifest, split_file


@pytest.fixture()
def experiment_config(tmp_path, synthetic_dataset, tiny_preprocess, tiny_model_config):
    """A toy experiment: two members, a handful of batches."""
    manifest, split_file = synthetic_dataset
    return ExperimentConfig(
        name="toy",
        preprocess=tiny_preprocess,
        model=tiny_model_config(),
        train=TrainConfig(
            batch_size=2,
            max_batches=4,
            eval_every_batches=2,
            patience_batches=100,
            augmentation=AugmentConfig(elastic_grid=4, elastic_sigma_voxels=2.0),
        ),
        ensemble_size=2,
        mask_source="external_file",
        paths=PathsConfig(manifest=manifest, split_file=split_file, runs_dir=tmp_path / "runs"),
    )

