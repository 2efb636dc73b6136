"""Patient-grouped stratified splitting and split files.

Patients, not scans, are the unit of assignment: every scan of a patient ends up in the same
split. Each patient is stratified by the majority label among their scans (ties resolve to the
highest label); within a stratum, patients are shuffled with the ``split`` sub-stream of the
seed and dealt out to the splits by largest-remainder rounding of the target fractions, so each
split receives its target share of every stratum to within one patient.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from pathlib import Path
from typing import Mapping

import pandas as pd

from corads_grader.dataset.schemas import ScanRecord, Split, SplitAssignment
from corads_grader.errors import ManifestError, SplitError
from corads_grader.seeding import rng_for

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS: dict[Split, float] = {Split.TRAIN: 0.75, Split.VALIDATION: 0.25}


def _normalize_fractions(fractions: Mapping[Split | str, float]) -> dict[Split, float]:
    try:
        normalized = {Split(k): float(v) for k, v in fractions.items()}
    except ValueError as exc:
        raise SplitError(f"unknown split name in fractions: {exc}") from None
    if any(v < 0 for v in normalized.values()):
        raise SplitError("split fractions must be non-negative")
    if not math.isclose(sum(normalized.values()), 1.0, abs_tol=1e-9):
        raise SplitError(f"split fractions sum to {sum(normalized.values()):g}, expected 1")
    # Fixed order so the deal is independent of mapping order
    return {s: normalized[s] for s in Split if normalized.get(s, 0.0) > 0}


def patient_strata(records: list[ScanRecord]) -> dict[str, int]:
    """Majority label per patient; ties resolve to the highest label."""
    labels: dict[str, list[int]] = defaultdict(list)
    for r in records:
        labels[r.patient_id].append(r.label.value)
    strata = {}
    for patient_id, values in labels.items():
        counts = Counter(values)
        top = max(counts.values())
        strata[patient_id] = max(v for v, c in counts.items() if c == top)
    return strata


def _largest_remainder(n: int, fractions: dict[Split, float]) -> dict[Split, int]:
    targets = {s: f * n for s, f in fractions.items()}
    counts = {s: math.floor(t) for s, t in targets.items()}
    remaining = n - sum(counts.values())
    order = sorted(fractions, key=lambda s: (-(targets[s] - counts[s]), list(Split).index(s)))
    for s in order[:remaining]:
        counts[s] += 1
    return counts


def stratified_patient_split(
    records: list[ScanRecord],
    fractions: Mapping[Split | str, float] | None = None,
    seed: int = 0,
) -> SplitAssignment:
    """Assign every scan to a split, grouping by patient and stratifying by label."""
    splits = _normalize_fractions(fractions or DEFAULT_FRACTIONS)
    strata = patient_strata(records)

    patients_by_stratum: dict[int, list[str]] = defaultdict(list)
    for patient_id in sorted(strata):
        patients_by_stratum[strata[patient_id]].append(patient_id)

    too_small = sorted(
        stratum for stratum, patients in patients_by_stratum.items() if len(patients) < len(splits)
    )
    if too_small:
        listed = ", ".join(
            f"{s} ({len(patients_by_stratum[s])} patients)" for s in too_small
        )
        raise SplitError(f"classes with fewer patients than the {len(splits)} splits: {listed}")

    patient_split: dict[str, Split] = {}
    for stratum in sorted(patients_by_stratum):
        patients = patients_by_stratum[stratum]
        order = rng_for(seed, "split", stratum).permutation(len(patients))
        shuffled = [patients[i] for i in order]
        counts = _largest_remainder(len(shuffled), splits)
        start = 0
        for split, count in counts.items():
            for patient_id in shuffled[start : start + count]:
                patient_split[patient_id] = split
            start += count

    assignment = SplitAssignment(
        assignments={r.scan_id: patient_split[r.patient_id] for r in records}
    )
    logger.info(
        "Split %d scans of %d patients: %s",
        len(records),
        len(strata),
        {s.value: len(assignment.scans_in(s)) for s in splits},
    )
    return assignment


def write_split_file(assignment: SplitAssignment, path: str | Path) -> None:
    rows = [{"scan_id": k, "split": v.value} for k, v in assignment.assignments.items()]
    pd.DataFrame(rows, columns=["scan_id", "split"]).to_csv(path, index=False, lineterminator="\n")


def read_split_file(path: str | Path) -> SplitAssignment:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"split file not found: {path}")
    frame = pd.read_csv(path, dtype=str, comment="#", keep_default_na=False)
    if list(frame.columns) != ["scan_id", "split"]:
        raise ManifestError(f"{path}: expected header 'scan_id,split'")
    assignments: dict[str, Split] = {}
    for row_number, (scan_id, split) in enumerate(frame.itertuples(index=False), start=1):
        try:
            assignments[scan_id] = Split(split.strip().lower())
        except ValueError:
            raise ManifestError(f"unknown split '{split}'", row=row_number) from None
    return SplitAssignment(assignments=assignments)
