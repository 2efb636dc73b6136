"""Evaluation of a predictions file against a manifest, and report aggregation."""

from __future__ import annotations

import logging
import os
from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel

from corads_grader.dataset.schemas import LabelScheme, ScanRecord, to_binary
from corads_grader.errors import ConfigError, DataError, LabelError
from corads_grader.evaluation.bootstrap import (
    auc_metric,
    bootstrap_ci,
    bootstrap_significance,
    qwk_metric,
)
from corads_grader.evaluation.stats import (
    RocPoint,
    auc_score,
    confusion_matrix,
    off_by_more_than,
    qwk,
    roc_auc,
)
from corads_grader.inference.predictions import read_member_predictions, read_predictions

logger = logging.getLogger(__name__)


class Dichotomization(str, Enum):
    CORADS_12_VS_345 = "corads-1-2-vs-3-5"
    ICTCF_CONTROL_VS_REST = "ictcf-control-vs-rest"


DEFAULT_DICHOTOMIZATION = {
    LabelScheme.CORADS: Dichotomization.CORADS_12_VS_345,
    LabelScheme.ICTCF: Dichotomization.ICTCF_CONTROL_VS_REST,
}


class BootstrapConfig(BaseModel):
    n_iter: int = 1000
    seed: int = 0


class Comparison(BaseModel):
    """Paired bootstrap test of this run against a reference run."""

    against: str
    alternative: Literal["two-sided", "greater"]
    p_auc: float
    p_qwk: float | None = None


class EvalReport(BaseModel):
    scheme: LabelScheme
    dichotomization: Dichotomization
    n_scans: int
    n_pos: int
    n_neg: int
    n_excluded: int = 0
    auc: float
    auc_ci: tuple[float, float]
    roc_points: list[RocPoint]
    qwk: float | None = None
    qwk_ci: tuple[float, float] | None = None
    confusion: list[list[int]] | None = None
    off_by_more_than_one: int | None = None
    off_by_more_than_two: int | None = None
    member_aucs: list[float] | None = None
    bootstrap: BootstrapConfig
    comparison: Comparison | None = None

    @property
    def mean_member_auc(self) -> float | None:
        return float(np.mean(self.member_aucs)) if self.member_aucs else None

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> EvalReport:
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_roc_csv(report: EvalReport, path: str | Path) -> None:
    frame = pd.DataFrame([p.model_dump() for p in report.roc_points])
    frame[["fpr", "tpr", "threshold"]].to_csv(path, index=False, lineterminator="\n")


def _evaluable(records: list[ScanRecord]) -> tuple[list[ScanRecord], LabelScheme, int]:
    schemes = {r.scheme for r in records}
    if len(schemes) != 1:
        raise LabelError("evaluation manifest must use exactly one label scheme")
    scheme = schemes.pop()
    if scheme not in DEFAULT_DICHOTOMIZATION:
        raise LabelError(f"cannot evaluate {scheme.value} manifests")
    kept = [r for r in records if not r.label.is_suspected]
    return kept, scheme, len(records) - len(kept)


def _aligned(frame: pd.DataFrame, records: list[ScanRecord], source: str) -> pd.DataFrame:
    missing = [r.scan_id for r in records if r.scan_id not in frame.index]
    if missing:
        shown = ", ".join(missing[:10])
        more = f" and {len(missing) - 10} more" if len(missing) > 10 else ""
        raise DataError(f"{source} lacks predictions for {shown}{more}")
    return frame.loc[[r.scan_id for r in records]]


def _member_aucs(
    predictions_file: Path, records: list[ScanRecord], labels: np.ndarray
) -> list[float] | None:
    members = read_member_predictions(predictions_file)
    if members is None:
        return None
    aucs = []
    for _, group in members.groupby("member", sort=True):
        aligned = _aligned(group.set_index("scan_id"), records, "member predictions")
        aucs.append(auc_score(aligned["positive_score"].to_numpy(), labels))
    return aucs


def evaluate_run(
    predictions_file: str | Path,
    records: list[ScanRecord],
    dichotomization: Dichotomization | None = None,
    n_iter: int = 1000,
    seed: int = 0,
    n_jobs: int = 1,
) -> EvalReport:
    """Full report for the scans in ``records``.

    CO-RADS manifests get QWK, confusion and error-distance counts plus AUC for 1-2 vs 3-5;
    iCTCF manifests only get AUC for Control vs the rest, with Suspected scans left out.
    """
    predictions_file = Path(predictions_file)
    records, scheme, n_excluded = _evaluable(records)
    rule = dichotomization or DEFAULT_DICHOTOMIZATION[scheme]
    if rule is not DEFAULT_DICHOTOMIZATION[scheme]:
        raise ConfigError(f"dichotomization {rule.value} does not apply to {scheme.value} labels")

    frame = _aligned(read_predictions(predictions_file), records, str(predictions_file))
    scores = frame["positive_score"].to_numpy(dtype=np.float64)
    grades = frame["corads"].to_numpy(dtype=np.int64)
    labels = np.array([to_binary(r.label).value for r in records], dtype=np.int64)

    auc, points = roc_auc(scores, labels)
    report = EvalReport(
        scheme=scheme,
        dichotomization=rule,
        n_scans=len(records),
        n_pos=int(labels.sum()),
        n_neg=int(len(labels) - labels.sum()),
        n_excluded=n_excluded,
        auc=auc,
        auc_ci=bootstrap_ci(
            auc_metric, scores, labels, n_iter, seed, n_jobs=n_jobs, contain_point=True
        ),
        roc_points=points,
        member_aucs=_member_aucs(predictions_file, records, labels),
        bootstrap=BootstrapConfig(n_iter=n_iter, seed=seed),
    )
    if scheme is LabelScheme.CORADS:
        truth = np.array([r.label.value for r in records], dtype=np.int64)
        report.qwk = qwk(truth, grades)
        report.qwk_ci = bootstrap_ci(
            qwk_metric, grades, truth, n_iter, seed, n_jobs=n_jobs, contain_point=True
        )
        report.confusion = confusion_matrix(truth, grades).tolist()
        report.off_by_more_than_one = off_by_more_than(truth, grades, 1)
        report.off_by_more_than_two = off_by_more_than(truth, grades, 2)

    logger.info(
        "Evaluated %d scans: AUC %.4f [%.4f, %.4f]%s",
        report.n_scans,
        report.auc,
        *report.auc_ci,
        f", QWK {report.qwk:.4f}" if report.qwk is not None else "",
        extra={"operation": "evaluate"},
    )
    return report


def compare_runs(
    predictions_a: str | Path,
    predictions_b: str | Path,
    records: list[ScanRecord],
    against: str,
    n_iter: int = 1000,
    seed: int = 0,
    alternative: Literal["two-sided", "greater"] = "two-sided",
    n_jobs: int = 1,
) -> Comparison:
    """Paired bootstrap p-values for run A against run B on the same scans."""
    records, scheme, _ = _evaluable(records)
    a = _aligned(read_predictions(predictions_a), records, str(predictions_a))
    b = _aligned(read_predictions(predictions_b), records, str(predictions_b))
    labels = np.array([to_binary(r.label).value for r in records], dtype=np.int64)
    p_auc = bootstrap_significance(
        auc_metric,
        a["positive_score"].to_numpy(dtype=np.float64),
        b["positive_score"].to_numpy(dtype=np.float64),
        labels,
        n_iter,
        seed,
        alternative,
        n_jobs,
    )
    p_qwk = None
    if scheme is LabelScheme.CORADS:
        truth = np.array([r.label.value for r in records], dtype=np.int64)
        p_qwk = bootstrap_significance(
            qwk_metric,
            a["corads"].to_numpy(dtype=np.int64),
            b["corads"].to_numpy(dtype=np.int64),
            truth,
            n_iter,
            seed,
            alternative,
            n_jobs,
        )
    return Comparison(against=against, alternative=alternative, p_auc=p_auc, p_qwk=p_qwk)


def summarize_reports(
    reports: dict[str, EvalReport], mean_best_batches: dict[str, float] | None = None
) -> pd.DataFrame:
    """One row per run: point estimates, CIs, error counts, comparison p-values and, when
    given, the mean batch at which ensemble members reached their best validation QWK."""
    rows = []
    for name, r in reports.items():
        rows.append(
            {
                "run": name,
                "n_scans": r.n_scans,
                "auc": r.auc,
                "auc_lo": r.auc_ci[0],
                "auc_hi": r.auc_ci[1],
                "qwk": r.qwk,
                "qwk_lo": r.qwk_ci[0] if r.qwk_ci else None,
                "qwk_hi": r.qwk_ci[1] if r.qwk_ci else None,
                "off_by_more_than_one": r.off_by_more_than_one,
                "off_by_more_than_two": r.off_by_more_than_two,
                "mean_member_auc": r.mean_member_auc,
                "against": r.comparison.against if r.comparison else None,
                "p_auc": r.comparison.p_auc if r.comparison else None,
                "p_qwk": r.comparison.p_qwk if r.comparison else None,
                "mean_best_batch": (mean_best_batches or {}).get(name),
            }
        )
    return pd.DataFrame(rows)
