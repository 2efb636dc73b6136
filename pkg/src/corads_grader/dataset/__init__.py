"""Dataset layer: manifests, label schemes and patient-grouped splits."""

from corads_grader.dataset.manifest import (
    class_distribution,
    load_manifest,
    named_distribution,
    write_manifest,
)
from corads_grader.dataset.schemas import (
    GradeLabel,
    LabelScheme,
    ScanRecord,
    Split,
    SplitAssignment,
    to_binary,
)
from corads_grader.dataset.splits import (
    read_split_file,
    stratified_patient_split,
    write_split_file,
)

__all__ = [
    "GradeLabel",
    "LabelScheme",
    "ScanRecord",
    "Split",
    "SplitAssignment",
    "class_distribution",
    "load_manifest",
    "named_distribution",
    "read_split_file",
    "stratified_patient_split",
    "to_binary",
    "write_manifest",
    "write_split_file",
]
