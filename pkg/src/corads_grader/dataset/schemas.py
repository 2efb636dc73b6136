"""Pydantic models for scans, grade labels and split assignments."""

from __future__ import annotations

from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, model_validator

from corads_grader.errors import LabelError


class LabelScheme(str, Enum):
    CORADS = "CORADS"
    ICTCF = "ICTCF"
    BINARY = "BINARY"


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


ICTCF_SUSPECTED = -1
"""Sentinel for iCTCF "Suspected" cases: no etiological evidence, never evaluated."""

ICTCF_NAMES: dict[int, str] = {
    0: "Control",
    1: "Mild",
    2: "Regular",
    3: "Severe",
    4: "Critically ill",
    ICTCF_SUSPECTED: "Suspected",
}

LEGAL_VALUES: dict[LabelScheme, tuple[int, ...]] = {
    LabelScheme.CORADS: (1, 2, 3, 4, 5),
    LabelScheme.ICTCF: (0, 1, 2, 3, 4, ICTCF_SUSPECTED),
    LabelScheme.BINARY: (0, 1),
}


def gradable_values(scheme: LabelScheme) -> tuple[int, ...]:
    """Legal values of a scheme excluding sentinels."""
    return tuple(v for v in LEGAL_VALUES[scheme] if v != ICTCF_SUSPECTED)


class GradeLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: LabelScheme
    value: int

    @model_validator(mode="after")
    def _value_in_range(self) -> GradeLabel:
        if self.value not in LEGAL_VALUES[self.scheme]:
            legal = ", ".join(str(v) for v in LEGAL_VALUES[self.scheme])
            raise ValueError(
                f"label {self.value} is not legal under {self.scheme.value} (legal: {legal})"
            )
        return self

    @property
    def is_suspected(self) -> bool:
        return self.scheme is LabelScheme.ICTCF and self.value == ICTCF_SUSPECTED

    @property
    def name(self) -> str:
        if self.scheme is LabelScheme.ICTCF:
            return ICTCF_NAMES[self.value]
        if self.scheme is LabelScheme.CORADS:
            return f"CO-RADS {self.value}"
        return "positive" if self.value else "negative"


class ScanRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    scan_id: str
    patient_id: str
    volume_path: Path
    label: GradeLabel

    @property
    def scheme(self) -> LabelScheme:
        return self.label.scheme


class SplitAssignment(BaseModel):
    """Mapping scan_id -> split, one entry per manifest scan."""

    assignments: dict[str, Split]

    def scans_in(self, split: Split) -> list[str]:
        return [scan_id for scan_id, s in self.assignments.items() if s is split]

    def records_in(self, records: list[ScanRecord], split: Split) -> list[ScanRecord]:
        return [r for r in records if self.assignments.get(r.scan_id) is split]


def to_binary(label: GradeLabel) -> GradeLabel:
    """Dichotomize a CO-RADS or iCTCF label.

    CO-RADS 1-2 are negative and 3-5 positive; iCTCF Control is negative and every other
    category positive. Binary labels are rejected rather than passed through.
    """
    if label.scheme is LabelScheme.BINARY:
        raise LabelError("label is already binary")
    if label.is_suspected:
        raise LabelError("iCTCF 'Suspected' cases have no reference standard")
    if label.scheme is LabelScheme.CORADS:
        positive = label.value >= 3
    else:
        positive = label.value != 0
    return GradeLabel(scheme=LabelScheme.BINARY, value=int(positive))
