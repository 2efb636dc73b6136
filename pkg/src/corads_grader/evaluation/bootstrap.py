"""Non-parametric bootstrap: percentile confidence intervals and paired significance tests.

Resample ``i`` uses the generator ``rng_for(seed, "bootstrap", i, j)`` where ``j`` counts
redraws of that resample after a draw on which the metric is undefined (e.g. a single-class
resample for AUC). Each resample owns its stream, so serial and threaded runs agree exactly.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from corads_grader.errors import DataError, MetricUndefinedError
from corads_grader.evaluation.stats import auc_score, qwk
from corads_grader.metrics import metrics
from corads_grader.seeding import rng_for

logger = logging.getLogger(__name__)

Metric = Callable[[np.ndarray, np.ndarray], float]

MAX_REDRAWS = 1000
MAX_UNDEFINED_FRACTION = 0.5


def auc_metric(scores: np.ndarray, labels: np.ndarray) -> float:
    return auc_score(scores, labels)


def qwk_metric(grades: np.ndarray, labels: np.ndarray) -> float:
    return qwk(labels, grades)


def _resample(
    seed: int, i: int, n: int, statistic: Callable[[np.ndarray], float]
) -> tuple[float, int]:
    """Value of ``statistic`` on resample ``i`` and the number of undefined draws before it."""
    for j in range(MAX_REDRAWS):
        idx = rng_for(seed, "bootstrap", i, j).integers(n, size=n)
        try:
            return statistic(idx), j
        except MetricUndefinedError:
            continue
    raise MetricUndefinedError(
        f"metric undefined on {MAX_REDRAWS} consecutive resamples; sample too degenerate"
    )


def _run(
    statistic: Callable[[np.ndarray], float], n: int, n_iter: int, seed: int, n_jobs: int
) -> np.ndarray:
    if n_iter < 1:
        raise DataError(f"n_iter must be >= 1, got {n_iter}")
    with metrics.timer("bootstrap"):
        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                results = list(pool.map(lambda i: _resample(seed, i, n, statistic), range(n_iter)))
        else:
            results = [_resample(seed, i, n, statistic) for i in range(n_iter)]
    values = np.array([v for v, _ in results], dtype=np.float64)
    undefined = sum(u for _, u in results)
    if undefined / (n_iter + undefined) > MAX_UNDEFINED_FRACTION:
        raise MetricUndefinedError(
            f"metric undefined on {undefined} of {n_iter + undefined} resamples; "
            "sample too degenerate for bootstrapping"
        )
    if undefined:
        logger.debug("Redrew %d degenerate bootstrap resamples", undefined)
    return values


def bootstrap_ci(
    metric: Metric,
    predictions: ArrayLike,
    labels: ArrayLike,
    n_iter: int = 1000,
    seed: int = 0,
    level: float = 0.95,
    n_jobs: int = 1,
    contain_point: bool = False,
) -> tuple[float, float]:
    """Percentile interval of ``metric`` over scan-level resamples.

    Returns the raw ``(1 - level) / 2`` and ``(1 + level) / 2`` percentiles. With
    ``contain_point`` the interval is widened to the full-sample estimate when the percentiles
    miss it, which can happen on small or skewed samples.
    """
    preds = np.asarray(predictions)
    y = np.asarray(labels)
    if preds.shape[0] != y.shape[0]:
        raise DataError(f"{preds.shape[0]} predictions for {y.shape[0]} labels")
    point = metric(preds, y)
    values = _run(lambda idx: metric(preds[idx], y[idx]), y.shape[0], n_iter, seed, n_jobs)
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = (float(v) for v in np.percentile(values, [tail, 100.0 - tail]))
    if contain_point:
        lo, hi = min(lo, point), max(hi, point)
    return lo, hi


def bootstrap_significance(
    metric: Metric,
    preds_a: ArrayLike,
    preds_b: ArrayLike,
    labels: ArrayLike,
    n_iter: int = 1000,
    seed: int = 0,
    alternative: Literal["two-sided", "greater"] = "two-sided",
    n_jobs: int = 1,
) -> float:
    """Paired bootstrap p-value for ``metric(a) - metric(b)``.

    Two-sided: ``2 min(P(d <= 0), P(d >= 0))``; "greater" tests a > b with ``P(d <= 0)``.
    Clamped to ``[1 / n_iter, 1]``.
    """
    a = np.asarray(preds_a)
    b = np.asarray(preds_b)
    y = np.asarray(labels)
    if not (a.shape[0] == b.shape[0] == y.shape[0]):
        raise DataError(
            f"paired test needs equal sizes, got {a.shape[0]}, {b.shape[0]} and {y.shape[0]}"
        )
    if alternative not in ("two-sided", "greater"):
        raise DataError(f"unknown alternative '{alternative}'")
    metric(a, y)
    metric(b, y)

    diffs = _run(
        lambda idx: metric(a[idx], y[idx]) - metric(b[idx], y[idx]),
        y.shape[0],
        n_iter,
        seed,
        n_jobs,
    )
    at_most_zero = float(np.mean(diffs <= 0))
    if alternative == "greater":
        p = at_most_zero
    else:
        p = 2.0 * min(at_most_zero, float(np.mean(diffs >= 0)))
    return float(np.clip(p, 1.0 / n_iter, 1.0))
