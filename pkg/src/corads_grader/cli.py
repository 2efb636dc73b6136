"""Command-line entry point: ``corads-grader <subcommand>``.

Subcommands: ``synth``, ``preprocess``, ``train``, ``ablate``, ``evaluate``, ``report``.
Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from corads_grader.config import get_settings
from corads_grader.dataset.manifest import load_manifest
from corads_grader.dataset.schemas import ScanRecord, Split
from corads_grader.dataset.splits import (
    read_split_file,
    stratified_patient_split,
    write_split_file,
)
from corads_grader.errors import ConfigError, GraderError
from corads_grader.evaluation.plots import plot_ablation, plot_confusion, plot_roc
from corads_grader.evaluation.report import (
    EvalReport,
    compare_runs,
    evaluate_run,
    summarize_reports,
    write_roc_csv,
)
from corads_grader.experiments.ablation import (
    AblationAxis,
    ablation_grid,
    component_grid,
    run_ablation,
)
from corads_grader.experiments.config import ExperimentConfig, load_experiment
from corads_grader.experiments.runs import (
    METADATA_FILE,
    load_ensemble,
    make_loader,
    mean_best_batch,
    train_run,
)
from corads_grader.experiments.synth import SyntheticSpec, generate_dataset
from corads_grader.inference.ensemble import predict_records
from corads_grader.inference.predictions import write_predictions
from corads_grader.logging_config import generate_run_id, run_id_var, setup_logging
from corads_grader.metrics import metrics

logger = logging.getLogger(__name__)

PREDICTIONS_FILE = "predictions.csv"
REPORT_FILE = "report.json"


class _Parser(argparse.ArgumentParser):
    """Usage errors become :class:`ConfigError` so they exit with code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"{self.prog}: {message}")


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="experiment TOML file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config value, e.g. --set train.max_batches=500 (repeatable)",
    )


def _split_fractions(values: list[float]) -> dict[Split, float]:
    if len(values) != 3:
        raise ConfigError("--fractions needs three values: train validation test")
    return {
        split: fraction
        for split, fraction in zip((Split.TRAIN, Split.VALIDATION, Split.TEST), values)
        if fraction > 0
    }


# synth ----------------------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    updates: dict = {"n_scans": args.n_scans, "seed": args.seed}
    if args.shape:
        updates["shape"] = tuple(args.shape)
    spec = SyntheticSpec.model_validate({**SyntheticSpec().model_dump(), **updates})
    manifest = generate_dataset(spec, args.out)
    records = load_manifest(manifest)
    split = stratified_patient_split(records, _split_fractions(args.fractions), args.seed)
    split_path = args.out / "split.csv"
    write_split_file(split, split_path)
    print(f"Wrote {len(records)} scans: {manifest}")
    print(f"Split file: {split_path}")
    return 0


# preprocess -----------------------------------------------------------------------------------


def cmd_preprocess(args: argparse.Namespace) -> int:
    config = load_experiment(args.config, args.overrides)
    records: list[ScanRecord] = []
    for path in (config.paths.manifest, config.paths.test_manifest):
        if path is not None:
            records.extend(load_manifest(path))
    if not records:
        raise ConfigError("no manifest configured (paths.manifest / paths.test_manifest)")
    loader = make_loader(config, records)
    with metrics.timer("preprocess"):
        for record in records:
            loader.prepare(record)
    hit_rate = metrics.hit_rate("cache")
    print(f"Preprocessed {len(records)} scans into {loader.cache.directory}")
    if hit_rate is not None:
        print(f"Cache hit rate: {100 * hit_rate:.1f}%")
    return 0


# train / ablate -------------------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    config = load_experiment(args.config, args.overrides)
    run_dir = train_run(config, seed=args.seed)
    print(f"Run directory: {run_dir}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    base = load_experiment(args.config, args.overrides)
    if args.component_grid:
        points = component_grid()
    elif args.axes:
        points = ablation_grid(args.axes)
    else:
        raise ConfigError("ablate needs --axes or --component-grid")
    result = run_ablation(base, points, seed=args.seed)
    for name, run_dir in result.run_dirs.items():
        print(f"{name}: {run_dir}")
    if result.cache_hit_rate is not None:
        print(f"Preprocessing cache hit rate: {100 * result.cache_hit_rate:.1f}%")
    return 0


# evaluate -------------------------------------------------------------------------------------


def _evaluation_records(args: argparse.Namespace, config: ExperimentConfig) -> list[ScanRecord]:
    manifest = args.manifest or config.paths.test_manifest
    split_file = args.split_file
    if manifest is None:
        manifest = config.paths.manifest
        split_file = split_file or config.paths.split_file
        if manifest is None or split_file is None:
            raise ConfigError("evaluate needs --manifest, paths.test_manifest or a split file")
    records = load_manifest(manifest)
    if split_file is not None:
        records = read_split_file(split_file).records_in(records, Split(args.split))
    if not records:
        raise ConfigError(f"no scans to evaluate in {manifest} (split {args.split})")
    return records


def _reference_predictions(against: Path) -> Path:
    """A predictions CSV, an evaluation directory, or a run directory evaluated before."""
    if against.is_file():
        return against
    for candidate in (against / PREDICTIONS_FILE, against / "eval" / PREDICTIONS_FILE):
        if candidate.is_file():
            return candidate
    raise ConfigError(f"no predictions found for --against {against}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    ensemble, config, missing = load_ensemble(args.run_dir)
    records = _evaluation_records(args, config)
    out_dir = args.out or args.run_dir / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)

    device = get_settings().runtime.torch_device()
    for member in ensemble.members:
        member.to(device)
    loader = make_loader(config, records)
    with metrics.timer("predict"):
        predictions = predict_records(
            ensemble, records, loader, config.train.batch_size, args.n_jobs
        )
    predictions_path = out_dir / PREDICTIONS_FILE
    write_predictions(predictions, predictions_path, ensemble.head, ensemble.seeds)

    report = evaluate_run(
        predictions_path, records, n_iter=args.n_iter, seed=args.seed, n_jobs=args.n_jobs
    )
    if args.against is not None:
        report.comparison = compare_runs(
            predictions_path,
            _reference_predictions(args.against),
            records,
            against=str(args.against),
            n_iter=args.n_iter,
            seed=args.seed,
            alternative="greater" if args.one_sided else "two-sided",
            n_jobs=args.n_jobs,
        )
    report.save(out_dir / REPORT_FILE)
    write_roc_csv(report, out_dir / "roc.csv")
    for fmt in args.plot_format:
        plot_roc({config.name: report}, out_dir / f"roc.{fmt}", title=config.name)
        if report.confusion is not None:
            plot_confusion(report, out_dir / f"confusion.{fmt}")

    print(f"AUC {report.auc:.4f} (95% CI {report.auc_ci[0]:.4f}-{report.auc_ci[1]:.4f})")
    if report.qwk is not None and report.qwk_ci is not None:
        print(f"QWK {report.qwk:.4f} (95% CI {report.qwk_ci[0]:.4f}-{report.qwk_ci[1]:.4f})")
    if report.comparison is not None:
        print(f"p-value vs {report.comparison.against}: AUC {report.comparison.p_auc:.4f}")
    if missing:
        print(f"Warning: evaluated without members with seeds {missing}")
    print(f"Report: {out_dir / REPORT_FILE}")
    return 0


# report ---------------------------------------------------------------------------------------


def _run_dir_of(report_path: Path) -> Path | None:
    for parent in report_path.parents[:3]:
        if (parent / METADATA_FILE).is_file():
            return parent
    return None


def cmd_report(args: argparse.Namespace) -> int:
    reports: dict[str, EvalReport] = {}
    best_batches: dict[str, float] = {}
    names = args.names or []
    if names and len(names) != len(args.reports):
        raise ConfigError("--names needs one name per report")
    for i, path in enumerate(args.reports):
        run_dir = _run_dir_of(path)
        name = names[i] if names else (run_dir or path.parent).name
        reports[name] = EvalReport.load(path)
        if run_dir is not None:
            batch = mean_best_batch(run_dir)
            if batch is not None:
                best_batches[name] = batch

    summary = summarize_reports(reports, best_batches)
    args.out.mkdir(parents=True, exist_ok=True)
    summary.to_csv(args.out / "summary.csv", index=False, lineterminator="\n")
    (args.out / "summary.md").write_text(
        summary.to_markdown(index=False, floatfmt=".4f") + "\n", encoding="utf-8"
    )
    for fmt in args.plot_format:
        plot_ablation(summary, args.out / f"ablation.{fmt}")
        plot_roc(reports, args.out / f"roc.{fmt}")
    print(summary.to_string(index=False))
    return 0


# parser ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corads-grader", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-scans", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=int, nargs=3, metavar=("Z", "Y", "X"))
    p.add_argument(
        "--fractions",
        type=float,
        nargs=3,
        default=[0.6, 0.2, 0.2],
        metavar=("TRAIN", "VAL", "TEST"),
    )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="fill the preprocessing cache")
    _add_config_args(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train an ensemble (resumable)")
    _add_config_args(p)
    p.add_argument("--seed", type=int, default=0, help="seed of the first member")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="train one run per ablation point")
    _add_config_args(p)
    p.add_argument("--axes", nargs="+", choices=[a.value for a in AblationAxis])
    p.add_argument(
        "--component-grid", action="store_true", help="full 3D, minus each part, full 2D"
    )
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("evaluate", help="predict and evaluate a trained run")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--manifest", type=Path, help="defaults to the run's test manifest")
    p.add_argument("--split-file", type=Path)
    p.add_argument("--split", default=Split.TEST.value, choices=[s.value for s in Split])
    p.add_argument("--out", type=Path, help="defaults to <run_dir>/eval")
    p.add_argument("--against", type=Path, help="reference predictions or evaluated run")
    p.add_argument("--one-sided", action="store_true", help="test 'better than' the reference")
    p.add_argument("--n-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--plot-format", nargs="*", default=["svg", "png"], choices=["svg", "png"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate evaluation reports")
    p.add_argument("reports", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--names", nargs="+")
    p.add_argument("--plot-format", nargs="*", default=["svg"], choices=["svg", "png"])
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    settings = get_settings()
    setup_logging(settings.logging.level, settings.logging.format)
    run_id_var.set(generate_run_id())
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except GraderError as exc:
        logger.error("%s", exc)
        for note in getattr(exc, "__notes__", []):
            logger.error("  %s", note)
        return exc.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return 3


if __name__ == "__main__":
    sys.exit(main())
