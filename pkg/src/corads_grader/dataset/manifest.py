"""Manifest ingestion and class histograms.

Manifest format: UTF-8 CSV with header ``scan_id,patient_id,volume_path,scheme,label``; the
label is the integer code of its scheme; lines starting with ``#`` are ignored. Relative
volume paths resolve against the manifest's directory. Row numbers in errors count data rows
from 1, skipping the header and comment lines.
"""

from __future__ import annotations

import io
import logging
from collections import Counter
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from corads_grader.dataset.schemas import GradeLabel, LabelScheme, ScanRecord
from corads_grader.errors import LabelError, ManifestError

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["scan_id", "patient_id", "volume_path", "scheme", "label"]


def _parse_row(row: dict[str, str], row_number: int, base_dir: Path) -> ScanRecord:
    for column in MANIFEST_COLUMNS:
        if not row.get(column, "").strip():
            raise ManifestError(f"empty '{column}'", row=row_number)

    scheme_raw = row["scheme"].strip().upper()
    try:
        scheme = LabelScheme(scheme_raw)
    except ValueError:
        raise ManifestError(f"unknown scheme '{row['scheme']}'", row=row_number) from None

    try:
        value = int(row["label"].strip())
    except ValueError:
        raise ManifestError(f"label '{row['label']}' is not an integer", row=row_number) from None

    try:
        label = GradeLabel(scheme=scheme, value=value)
    except ValidationError as exc:
        message = exc.errors()[0]["msg"].removeprefix("Value error, ")
        raise ManifestError(message, row=row_number) from None

    volume_path = Path(row["volume_path"].strip())
    if not volume_path.is_absolute():
        volume_path = base_dir / volume_path

    return ScanRecord(
        scan_id=row["scan_id"].strip(),
        patient_id=row["patient_id"].strip(),
        volume_path=volume_path,
        label=label,
    )


def load_manifest(path: str | Path) -> list[ScanRecord]:
    """Read a manifest file into validated records, one per data row."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")

    try:
        # only whole-line comments; "#" may appear inside fields
        lines = [
            line
            for line in path.read_text(encoding="utf-8").splitlines()
            if not line.lstrip().startswith("#")
        ]
        frame = pd.read_csv(
            io.StringIO("\n".join(lines)),
            dtype=str,
            skip_blank_lines=True,
            keep_default_na=False,
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ManifestError(f"cannot parse {path}: {exc}") from None

    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise ManifestError(f"{path}: missing columns {', '.join(missing)}")

    records: list[ScanRecord] = []
    seen: set[str] = set()
    for row_number, row in enumerate(frame[MANIFEST_COLUMNS].to_dict("records"), start=1):
        record = _parse_row(row, row_number, path.parent)
        if record.scan_id in seen:
            raise ManifestError(f"duplicate scan_id '{record.scan_id}'", row=row_number)
        seen.add(record.scan_id)
        records.append(record)

    logger.info("Loaded manifest %s (%d scans)", path, len(records))
    return records


def write_manifest(records: list[ScanRecord], path: str | Path) -> None:
    """Write records in manifest format, volume paths relative to the manifest when possible."""
    path = Path(path)
    rows = []
    for r in records:
        volume_path = r.volume_path
        if volume_path.is_absolute() and volume_path.is_relative_to(path.parent.resolve()):
            volume_path = volume_path.relative_to(path.parent.resolve())
        rows.append(
            {
                "scan_id": r.scan_id,
                "patient_id": r.patient_id,
                "volume_path": volume_path.as_posix(),
                "scheme": r.scheme.value,
                "label": r.label.value,
            }
        )
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, index=False, lineterminator="\n")


def class_distribution(records: list[ScanRecord]) -> dict[int, int]:
    """Histogram of label values, sorted by value. Records must share one scheme."""
    schemes = {r.scheme for r in records}
    if len(schemes) > 1:
        names = ", ".join(sorted(s.value for s in schemes))
        raise LabelError(f"mixed label schemes in records: {names}")
    counts = Counter(r.label.value for r in records)
    return dict(sorted(counts.items()))


def named_distribution(records: list[ScanRecord]) -> dict[str, int]:
    """Like :func:`class_distribution` but keyed by display name (e.g. ``"Control"``)."""
    if not records:
        return {}
    scheme = records[0].scheme
    return {
        GradeLabel(scheme=scheme, value=value).name: count
        for value, count in class_distribution(records).items()
    }
