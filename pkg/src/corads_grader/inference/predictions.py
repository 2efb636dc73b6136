"""Predictions files.

``predictions.csv``: ``scan_id,positive_score,corads,<raw outputs>``, where the raw outputs are
``raw_score`` for a continuous head and ``p_corads1 .. p_corads5`` for a categorical one. This
is also the export format for external scoring. ``predictions_members.csv`` holds the same
per member in long format: ``scan_id,member,seed,positive_score,corads,<raw outputs>``.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pandas as pd

from corads_grader.errors import DataError
from corads_grader.inference.ensemble import ScanPrediction
from corads_grader.models.config import N_GRADES, HeadType
from corads_grader.ordinal import outputs_to_scores

BASE_COLUMNS = ["scan_id", "positive_score", "corads"]
MEMBERS_SUFFIX = "_members"


def raw_columns(head: HeadType) -> list[str]:
    if head is HeadType.CONTINUOUS:
        return ["raw_score"]
    return [f"p_corads{c}" for c in range(1, N_GRADES + 1)]


def members_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}{MEMBERS_SUFFIX}{path.suffix}")


def _atomic_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    frame.to_csv(tmp, index=False, lineterminator="\n")
    os.replace(tmp, path)


def write_predictions(
    predictions: list[ScanPrediction],
    path: str | Path,
    head: HeadType,
    seeds: list[int] | None = None,
) -> None:
    """Write the ensemble file and, when member outputs are present, the member file."""
    path = Path(path)
    columns = raw_columns(head)
    rows = [
        [p.scan_id, p.positive_score, p.corads, *np.atleast_1d(p.raw).tolist()]
        for p in predictions
    ]
    _atomic_csv(pd.DataFrame(rows, columns=BASE_COLUMNS + columns), path)

    member_rows = []
    for p in predictions:
        if p.members.size == 0:
            continue
        outputs = p.members.reshape(p.members.shape[0], -1)
        scores, grades = outputs_to_scores(
            outputs if head is HeadType.CATEGORICAL else outputs[:, 0], head
        )
        for m, raw in enumerate(outputs):
            seed = seeds[m] if seeds is not None else m
            member_rows.append([p.scan_id, m, seed, scores[m], int(grades[m]), *raw.tolist()])
    if member_rows:
        frame = pd.DataFrame(
            member_rows, columns=["scan_id", "member", "seed", "positive_score", "corads", *columns]
        )
        _atomic_csv(frame, members_path(path))


def read_predictions(path: str | Path) -> pd.DataFrame:
    """Load a predictions file indexed by ``scan_id``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    frame = pd.read_csv(path, dtype={"scan_id": str})
    missing = [c for c in BASE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing columns {', '.join(missing)}")
    if frame["scan_id"].duplicated().any():
        raise DataError(f"{path}: duplicate scan_id rows")
    return frame.set_index("scan_id")


def read_member_predictions(path: str | Path) -> pd.DataFrame | None:
    """Member outputs next to ``path``, or None when that file does not exist."""
    members = members_path(path)
    if not members.is_file():
        return None
    return pd.read_csv(members, dtype={"scan_id": str})


def predictions_head(frame: pd.DataFrame) -> HeadType:
    if "raw_score" in frame.columns:
        return HeadType.CONTINUOUS
    return HeadType.CATEGORICAL
