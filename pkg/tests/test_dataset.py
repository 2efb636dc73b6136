"""Tests for labels, manifests and stratified patient splits."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import pytest
from pydantic import ValidationError

from corads_grader.dataset.manifest import (
    class_distribution,
    load_manifest,
    named_distribution,
    write_manifest,
)
from corads_grader.dataset.schemas import (
    ICTCF_SUSPECTED,
    GradeLabel,
    LabelScheme,
    ScanRecord,
    Split,
    to_binary,
)
from corads_grader.dataset.splits import (
    patient_strata,
    read_split_file,
    stratified_patient_split,
    write_split_file,
)
from corads_grader.errors import LabelError, ManifestError, SplitError
from tests.conftest import make_records

HEADER = "scan_id,patient_id,volume_path,scheme,label\n"


def _write(tmp_path: Path, body: str) -> Path:
    path = tmp_path / "manifest.csv"
    path.write_text(HEADER + body, encoding="utf-8")
    return path


class TestGradeLabel:
    def test_legal_values(self):
        assert GradeLabel(scheme=LabelScheme.CORADS, value=5).name == "CO-RADS 5"
        assert GradeLabel(scheme=LabelScheme.ICTCF, value=0).name == "Control"
        assert GradeLabel(scheme=LabelScheme.BINARY, value=1).name == "positive"

    @pytest.mark.parametrize(
        "scheme,value",
        [(LabelScheme.CORADS, 0), (LabelScheme.CORADS, 6), (LabelScheme.ICTCF, 5),
         (LabelScheme.BINARY, 2)],
    )
    def test_illegal_values(self, scheme, value):
        with pytest.raises(ValidationError, match="not legal"):
            GradeLabel(scheme=scheme, value=value)

    def test_suspected(self):
        assert GradeLabel(scheme=LabelScheme.ICTCF, value=ICTCF_SUSPECTED).is_suspected


class TestToBinary:
    @pytest.mark.parametrize("grade,expected", [(1, 0), (2, 0), (3, 1), (4, 1), (5, 1)])
    def test_corads(self, grade, expected):
        assert to_binary(GradeLabel(scheme=LabelScheme.CORADS, value=grade)).value == expected

    @pytest.mark.parametrize("value,expected", [(0, 0), (1, 1), (2, 1), (3, 1), (4, 1)])
    def test_ictcf(self, value, expected):
        assert to_binary(GradeLabel(scheme=LabelScheme.ICTCF, value=value)).value == expected

    def test_suspected_rejected(self):
        with pytest.raises(LabelError, match="Suspected"):
            to_binary(GradeLabel(scheme=LabelScheme.ICTCF, value=ICTCF_SUSPECTED))

    def test_binary_rejected(self):
        with pytest.raises(LabelError, match="already binary"):
            to_binary(GradeLabel(scheme=LabelScheme.BINARY, value=1))


class TestLoadManifest:
    def test_valid_manifest(self, tmp_path):
        path = _write(
            tmp_path,
            "a,p1,vol/a.raw,CORADS,3\n# comment line\nb,p1,/abs/b.raw,corads,5\n",
        )
        records = load_manifest(path)
        assert [r.scan_id for r in records] == ["a", "b"]
        assert records[0].volume_path == tmp_path / "vol" / "a.raw"
        assert records[1].volume_path == Path("/abs/b.raw")
        assert records[1].label.value == 5

    def test_hash_inside_a_field_is_data(self, tmp_path):
        path = _write(tmp_path, "  # indented comment\ns#1,p1,scans/case#1.raw,CORADS,3\n")
        (record,) = load_manifest(path)
        assert record.scan_id == "s#1"
        assert record.volume_path == tmp_path / "scans" / "case#1.raw"
        assert record.label.value == 3

    def test_only_comments_is_unparseable(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("# header removed\n")
        with pytest.raises(ManifestError, match="cannot parse"):
            load_manifest(path)

    def test_illegal_label_names_row(self, tmp_path):
        path = _write(tmp_path, "a,p1,a.raw,CORADS,3\nb,p2,b.raw,CORADS,7\n")
        with pytest.raises(ManifestError, match="row 2") as exc_info:
            load_manifest(path)
        assert exc_info.value.row == 2

    def test_unknown_scheme(self, tmp_path):
        with pytest.raises(ManifestError, match="unknown scheme"):
            load_manifest(_write(tmp_path, "a,p1,a.raw,RSNA,1\n"))

    def test_non_integer_label(self, tmp_path):
        with pytest.raises(ManifestError, match="not an integer"):
            load_manifest(_write(tmp_path, "a,p1,a.raw,CORADS,high\n"))

    def test_duplicate_scan_id(self, tmp_path):
        with pytest.raises(ManifestError, match="duplicate scan_id 'a'"):
            load_manifest(_write(tmp_path, "a,p1,a.raw,CORADS,1\na,p2,b.raw,CORADS,2\n"))

    def test_empty_field(self, tmp_path):
        with pytest.raises(ManifestError, match="empty 'patient_id'"):
            load_manifest(_write(tmp_path, "a,,a.raw,CORADS,1\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "nope.csv")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("scan_id,patient_id,volume_path,label\na,p1,a.raw,1\n")
        with pytest.raises(ManifestError, match="missing columns scheme"):
            load_manifest(path)

    def test_write_then_load_keeps_records(self, tmp_path):
        records = [
            ScanRecord(
                scan_id="x1",
                patient_id="p",
                volume_path=(tmp_path / "v" / "x1.raw").resolve(),
                label=GradeLabel(scheme=LabelScheme.ICTCF, value=ICTCF_SUSPECTED),
            )
        ]
        path = tmp_path / "manifest.csv"
        write_manifest(records, path)
        assert "v/x1.raw" in path.read_text()
        assert load_manifest(path)[0].volume_path.resolve() == records[0].volume_path


class TestDistributions:
    def test_class_distribution_sorted(self):
        records = make_records([3, 1, 3, 5, 1, 1])
        assert class_distribution(records) == {1: 3, 3: 2, 5: 1}

    def test_named_distribution_ictcf(self):
        records = make_records([0, 0, 1, ICTCF_SUSPECTED], LabelScheme.ICTCF)
        assert named_distribution(records) == {"Suspected": 1, "Control": 2, "Mild": 1}

    def test_mixed_schemes_rejected(self):
        records = make_records([1, 2]) + make_records([0], LabelScheme.ICTCF)
        with pytest.raises(LabelError, match="mixed label schemes"):
            class_distribution(records)


def _histogram_manifest(tmp_path: Path, scheme: str, counts: dict[int, int]) -> Path:
    rows = [
        f"{scheme.lower()}_{value}_{i},p_{value}_{i},v{value}_{i}.raw,{scheme},{value}\n"
        for value, n in counts.items()
        for i in range(n)
    ]
    return _write(tmp_path, "".join(rows))


class TestCohortHistograms:
    def test_corads_cohort(self, tmp_path):
        counts = {1: 354, 2: 105, 3: 123, 4: 65, 5: 135}
        records = load_manifest(_histogram_manifest(tmp_path, "CORADS", counts))
        assert len(records) == 782
        assert class_distribution(records) == counts
        positives = sum(to_binary(r.label).value for r in records)
        assert positives == 123 + 65 + 135

    def test_ictcf_cohort(self, tmp_path):
        counts = {0: 207, 1: 23, 2: 363, 3: 117, 4: 32}
        records = load_manifest(_histogram_manifest(tmp_path, "ICTCF", counts))
        assert named_distribution(records) == {
            "Control": 207,
            "Mild": 23,
            "Regular": 363,
            "Severe": 117,
            "Critically ill": 32,
        }
        assert Counter(to_binary(r.label).value for r in records) == {0: 207, 1: 535}


def _multi_scan_records() -> list[ScanRecord]:
    """40 patients (8 per grade), each with one to three scans."""
    records = []
    for p in range(40):
        grade = p % 5 + 1
        for s in range(p % 3 + 1):
            records.append(
                ScanRecord(
                    scan_id=f"p{p:02d}_s{s}",
                    patient_id=f"p{p:02d}",
                    volume_path=Path(f"/x/p{p:02d}_s{s}.raw"),
                    label=GradeLabel(scheme=LabelScheme.CORADS, value=grade),
                )
            )
    return records


class TestStratifiedSplit:
    def test_patients_never_cross_splits(self):
        records = _multi_scan_records()
        split = stratified_patient_split(records, seed=3)
        by_patient: dict[str, set] = {}
        for r in records:
            by_patient.setdefault(r.patient_id, set()).add(split.assignments[r.scan_id])
        assert all(len(s) == 1 for s in by_patient.values())
        assert set(split.assignments) == {r.scan_id for r in records}

    def test_class_proportions_per_split(self):
        records = _multi_scan_records()
        split = stratified_patient_split(records, {"train": 0.75, "validation": 0.25}, seed=0)
        strata = patient_strata(records)
        patients = {r.patient_id: split.assignments[r.scan_id] for r in records}
        per_class = Counter((strata[p], s) for p, s in patients.items())
        for grade in range(1, 6):
            assert per_class[(grade, Split.TRAIN)] == 6
            assert per_class[(grade, Split.VALIDATION)] == 2

    def test_deterministic(self):
        records = _multi_scan_records()
        a = stratified_patient_split(records, seed=11)
        b = stratified_patient_split(records, seed=11)
        assert a == b
        assert a != stratified_patient_split(records, seed=12)

    def test_majority_stratum_ties_to_higher(self):
        records = [
            ScanRecord(
                scan_id=f"s{i}",
                patient_id="p",
                volume_path=Path(f"/x/{i}.raw"),
                label=GradeLabel(scheme=LabelScheme.CORADS, value=v),
            )
            for i, v in enumerate([2, 4, 4, 2])
        ]
        assert patient_strata(records) == {"p": 4}

    def test_too_few_patients(self):
        records = make_records([1, 1, 1, 2])
        with pytest.raises(SplitError, match="2 \\(1 patients\\)"):
            stratified_patient_split(records, seed=0)

    def test_bad_fractions(self):
        records = make_records([1, 1, 2, 2])
        with pytest.raises(SplitError, match="sum to"):
            stratified_patient_split(records, {"train": 0.5, "validation": 0.4})
        with pytest.raises(SplitError, match="unknown split"):
            stratified_patient_split(records, {"train": 0.5, "holdout": 0.5})

    def test_split_file_round_trip(self, tmp_path):
        records = _multi_scan_records()
        split = stratified_patient_split(records, seed=1)
        write_split_file(split, tmp_path / "split.csv")
        assert read_split_file(tmp_path / "split.csv") == split

    def test_split_file_unknown_split(self, tmp_path):
        path = tmp_path / "split.csv"
        path.write_text("scan_id,split\na,train\nb,holdout\n")
        with pytest.raises(ManifestError, match="row 2: unknown split"):
            read_split_file(path)
