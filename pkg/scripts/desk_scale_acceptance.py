#!/usr/bin/env python3
"""Desk-scale acceptance run: synth -> preprocess -> train -> evaluate on synthetic phantoms.

Prints the best validation QWK per member, the ensemble test AUC/QWK and the mean member AUC.
Usage: desk_scale_acceptance.py [WORKDIR] [--max-batches N] [--members N]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from corads_grader.dataset.manifest import load_manifest
from corads_grader.dataset.schemas import Split
from corads_grader.dataset.splits import stratified_patient_split, write_split_file
from corads_grader.evaluation.report import evaluate_run
from corads_grader.experiments.config import ExperimentConfig, PathsConfig
from corads_grader.experiments.runs import load_ensemble, make_loader, read_metadata, train_run
from corads_grader.experiments.synth import SyntheticSpec, generate_dataset
from corads_grader.imaging.preprocess import PreprocessConfig
from corads_grader.inference.ensemble import predict_records
from corads_grader.inference.predictions import write_predictions
from corads_grader.logging_config import setup_logging
from corads_grader.models.config import ModelConfig
from corads_grader.training.schemas import TrainConfig

SPLIT = {Split.TRAIN: 0.6, Split.VALIDATION: 0.2, Split.TEST: 0.2}


def main(workdir: Path, max_batches: int, members: int, n_scans: int) -> None:
    spec = SyntheticSpec(n_scans=n_scans, shape=(32, 64, 64), spacing_mm=(3.0, 2.0, 2.0))
    manifest = generate_dataset(spec, workdir / "data")
    records = load_manifest(manifest)
    split = stratified_patient_split(records, SPLIT, seed=0)
    split_file = workdir / "data" / "split.csv"
    write_split_file(split, split_file)

    preprocess = PreprocessConfig(target_spacing_mm=3.0, crop_hw=(32, 32), n_slices=16)
    config = ExperimentConfig(
        name="desk-3d",
        preprocess=preprocess,
        model=ModelConfig(width_scale=0.25, input_geometry=preprocess.output_shape),
        train=TrainConfig(
            learning_rate=3e-4,
            batch_size=4,
            max_batches=max_batches,
            eval_every_batches=250,
            patience_batches=2000,
        ),
        ensemble_size=members,
        mask_source="external_file",
        paths=PathsConfig(manifest=manifest, split_file=split_file, runs_dir=workdir / "runs"),
    )

    run_dir = train_run(config)
    for member in read_metadata(run_dir).members:
        print(f"member {member.index}: best validation QWK {member.best_qwk:.3f} "
              f"at batch {member.best_batch}")

    ensemble, _, _ = load_ensemble(run_dir)
    test_records = split.records_in(records, Split.TEST)
    predictions = predict_records(ensemble, test_records, make_loader(config, test_records))
    predictions_path = run_dir / "eval" / "predictions.csv"
    write_predictions(predictions, predictions_path, ensemble.head, ensemble.seeds)
    report = evaluate_run(predictions_path, test_records)

    print(f"\n--- Test split ({report.n_scans} scans) ---")
    print(f"ensemble AUC {report.auc:.3f} ({report.auc_ci[0]:.3f}-{report.auc_ci[1]:.3f})")
    print(f"ensemble QWK {report.qwk:.3f}")
    if report.mean_member_auc is not None:
        print(f"mean member AUC {report.mean_member_auc:.3f}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("workdir", type=Path, nargs="?", default=Path("desk-run"))
    parser.add_argument("--max-batches", type=int, default=5000)
    parser.add_argument("--members", type=int, default=3)
    parser.add_argument("--n-scans", type=int, default=200)
    args = parser.parse_args()
    setup_logging("INFO", "text")
    main(args.workdir, args.max_batches, args.members, args.n_scans)
