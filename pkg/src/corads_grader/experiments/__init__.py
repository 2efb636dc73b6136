"""Experiment orchestration: configs, synthetic data, caching, runs and ablation grids."""

from corads_grader.experiments.ablation import (
    AblationAxis,
    AblationPoint,
    AblationResult,
    ablation_grid,
    component_grid,
    config_diff,
    run_ablation,
)
from corads_grader.experiments.cache import PreprocessCache, ScanLoader
from corads_grader.experiments.config import ExperimentConfig, PathsConfig, load_experiment
from corads_grader.experiments.runs import RunMetadata, load_ensemble, read_metadata, train_run
from corads_grader.experiments.synth import SyntheticSpec, generate_dataset

__all__ = [
    "AblationAxis",
    "AblationPoint",
    "AblationResult",
    "ExperimentConfig",
    "PathsConfig",
    "PreprocessCache",
    "RunMetadata",
    "ScanLoader",
    "SyntheticSpec",
    "ablation_grid",
    "component_grid",
    "config_diff",
    "generate_dataset",
    "load_ensemble",
    "load_experiment",
    "read_metadata",
    "run_ablation",
    "train_run",
]
