"""ROC, confusion-matrix and ablation figures. Output format follows the file suffix."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from corads_grader.evaluation.report import EvalReport  # noqa: E402


def _save(fig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)


def plot_roc(reports: dict[str, EvalReport], path: str | Path, title: str = "") -> None:
    """ROC curves of one or more runs on a shared axis, AUC and 95% CI in the legend."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for name, report in reports.items():
        fpr = [p.fpr for p in report.roc_points]
        tpr = [p.tpr for p in report.roc_points]
        lo, hi = report.auc_ci
        ax.plot(fpr, tpr, linewidth=1.2, label=f"{name}: AUC {report.auc:.3f} ({lo:.3f}-{hi:.3f})")
    ax.plot([0, 1], [0, 1], "--", color="grey", linewidth=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    ax.set_xlabel("1 - Specificity")
    ax.set_ylabel("Sensitivity")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_confusion(report: EvalReport, path: str | Path) -> None:
    if report.confusion is None:
        raise ValueError("report has no confusion matrix")
    matrix = np.asarray(report.confusion)
    k = matrix.shape[0]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.imshow(matrix, cmap="Blues")
    for i in range(k):
        for j in range(k):
            color = "white" if matrix[i, j] > matrix.max() / 2 else "black"
            ax.text(j, i, str(matrix[i, j]), ha="center", va="center", color=color)
    ticks = list(range(k))
    ax.set_xticks(ticks, [str(t + 1) for t in ticks])
    ax.set_yticks(ticks, [str(t + 1) for t in ticks])
    ax.set_xlabel("Predicted CO-RADS")
    ax.set_ylabel("Reference CO-RADS")
    _save(fig, path)


def plot_ablation(summary: pd.DataFrame, path: str | Path) -> None:
    """AUC and QWK bars per run with 95% CI error bars, from :func:`summarize_reports`."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    x = np.arange(len(summary))
    for ax, metric in zip(axes, ("auc", "qwk")):
        values = summary[metric].astype(float).to_numpy()
        lo = summary[f"{metric}_lo"].astype(float).to_numpy()
        hi = summary[f"{metric}_hi"].astype(float).to_numpy()
        errors = np.nan_to_num(np.vstack([values - lo, hi - values]))
        ax.bar(x, np.nan_to_num(values), yerr=errors, capsize=3, color="#4c72b0")
        ax.set_xticks(x, summary["run"], rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(metric.upper())
        ax.set_ylim(0, 1)
        ax.grid(axis="y", alpha=0.3)
    _save(fig, path)
