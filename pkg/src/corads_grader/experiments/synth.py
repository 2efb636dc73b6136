"""Synthetic chest-CT phantoms with grade-dependent lesion load.

Each phantom is air around an elliptic soft-tissue cylinder holding two ellipsoidal lungs.
Ground-glass and consolidation blobs are placed inside the lungs; the number and size of blobs
grow with the assigned CO-RADS grade, so the expected lesion volume increases strictly with
grade. Volumes, lung and lesion masks and a manifest are written to disk.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from corads_grader.dataset.manifest import write_manifest
from corads_grader.dataset.schemas import GradeLabel, LabelScheme, ScanRecord
from corads_grader.imaging.readers import sidecar_mask_path, write_mask, write_volume
from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind
from corads_grader.seeding import rng_for

logger = logging.getLogger(__name__)

AIR_HU = -1000.0
TISSUE_HU = 40.0
LUNG_HU = -850.0
GGO_HU = -550.0
CONSOLIDATION_HU = -100.0


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_scans: int = Field(200, ge=1)
    shape: tuple[int, int, int] = (64, 128, 128)
    spacing_mm: tuple[float, float, float] = (3.0, 2.0, 2.0)
    # Lung centres and semi-axes as fractions of the (z, y, x) field of view
    lung_centre_x: tuple[float, float] = (0.3, 0.7)
    lung_centre_zy: tuple[float, float] = (0.5, 0.5)
    lung_semi_axes: tuple[float, float, float] = (0.35, 0.3, 0.15)
    body_semi_axes_yx: tuple[float, float] = (0.42, 0.46)
    lesions_per_grade: tuple[int, int, int, int, int] = (0, 1, 3, 6, 10)
    lesion_radius_mm: tuple[tuple[float, float], ...] = (
        (4.0, 6.0),
        (5.0, 8.0),
        (6.0, 10.0),
        (7.0, 12.0),
        (8.0, 14.0),
    )
    consolidation_from_grade: int = Field(4, ge=1, le=5)
    noise_hu: float = Field(20.0, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> SyntheticSpec:
        counts = self.lesions_per_grade
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError(f"lesions_per_grade must increase strictly, got {counts}")
        if len(self.lesion_radius_mm) != 5:
            raise ValueError("lesion_radius_mm needs one (lo, hi) range per grade")
        for (lo_a, hi_a), (lo_b, hi_b) in zip(self.lesion_radius_mm, self.lesion_radius_mm[1:]):
            if lo_b < lo_a or hi_b < hi_a:
                raise ValueError("lesion radii must not shrink with grade")
        if min(self.shape) < 8:
            raise ValueError(f"phantom shape {self.shape} is too small")
        return self


@dataclass(frozen=True)
class Ellipsoid:
    centre_mm: tuple[float, float, float]
    semi_axes_mm: tuple[float, float, float]

    def contains(self, z: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        (cz, cy, cx), (az, ay, ax) = self.centre_mm, self.semi_axes_mm
        return ((z - cz) / az) ** 2 + ((y - cy) / ay) ** 2 + ((x - cx) / ax) ** 2 <= 1.0


def _grid_mm(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    axes = [(np.arange(n) + 0.5) * s for n, s in zip(spec.shape, spec.spacing_mm)]
    return np.ix_(*axes)  # type: ignore[return-value]


def lung_ellipsoids(spec: SyntheticSpec) -> list[Ellipsoid]:
    extent = [n * s for n, s in zip(spec.shape, spec.spacing_mm)]
    az, ay, ax = (f * e for f, e in zip(spec.lung_semi_axes, extent))
    cz = spec.lung_centre_zy[0] * extent[0]
    cy = spec.lung_centre_zy[1] * extent[1]
    return [Ellipsoid((cz, cy, fx * extent[2]), (az, ay, ax)) for fx in spec.lung_centre_x]


def analytic_lung_mask(spec: SyntheticSpec) -> np.ndarray:
    z, y, x = _grid_mm(spec)
    mask = np.zeros(spec.shape, dtype=bool)
    for ellipsoid in lung_ellipsoids(spec):
        mask |= ellipsoid.contains(z, y, x)
    return mask


def generate_phantom(
    spec: SyntheticSpec, grade: int, rng: np.random.Generator, scan_id: str
) -> tuple[CtVolume, BinaryMask, BinaryMask]:
    """One phantom of the given grade with its lung and lesion masks."""
    z, y, x = _grid_mm(spec)
    extent = [n * s for n, s in zip(spec.shape, spec.spacing_mm)]
    ay, ax = (f * e for f, e in zip(spec.body_semi_axes_yx, extent[1:]))
    body = ((y - extent[1] / 2) / ay) ** 2 + ((x - extent[2] / 2) / ax) ** 2 <= 1.0
    body = np.broadcast_to(body, spec.shape)
    lung = analytic_lung_mask(spec)

    hu = np.where(body, TISSUE_HU, AIR_HU).astype(np.float32)
    hu[lung] = LUNG_HU

    lesion = np.zeros(spec.shape, dtype=bool)
    lung_voxels = np.argwhere(lung)
    lo, hi = spec.lesion_radius_mm[grade - 1]
    for _ in range(spec.lesions_per_grade[grade - 1]):
        centre_index = lung_voxels[rng.integers(len(lung_voxels))]
        cz, cy, cx = ((i + 0.5) * s for i, s in zip(centre_index, spec.spacing_mm))
        radius = float(rng.uniform(lo, hi))
        sphere = Ellipsoid((cz, cy, cx), (radius, radius, radius))
        blob = sphere.contains(z, y, x) & lung
        consolidated = grade >= spec.consolidation_from_grade and rng.random() < 0.5
        hu[blob] = CONSOLIDATION_HU if consolidated else GGO_HU
        lesion |= blob

    if spec.noise_hu > 0:
        hu += rng.normal(0.0, spec.noise_hu, size=spec.shape).astype(np.float32)

    return (
        CtVolume(voxels=hu, spacing_mm=spec.spacing_mm, scan_id=scan_id),
        BinaryMask(voxels=lung, spacing_mm=spec.spacing_mm, kind=MaskKind.LUNG),
        BinaryMask(voxels=lesion, spacing_mm=spec.spacing_mm, kind=MaskKind.LESION),
    )


def assign_grades(spec: SyntheticSpec) -> np.ndarray:
    """Grades 1..5 in near-equal numbers, shuffled."""
    grades = np.resize(np.arange(1, 6), spec.n_scans)
    return rng_for(spec.seed, "synth", "grades").permutation(grades)


def generate_dataset(spec: SyntheticSpec, out_dir: str | Path) -> Path:
    """Write ``n_scans`` phantoms, their sidecar masks and ``manifest.csv``; return the
    manifest path. Re-running with the same spec reproduces every file bit for bit."""
    out_dir = Path(out_dir)
    volume_dir = out_dir / "volumes"
    volume_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for index, grade in enumerate(assign_grades(spec)):
        scan_id = f"synth_{index:04d}"
        volume, lung, lesion = generate_phantom(
            spec, int(grade), rng_for(spec.seed, "synth", index), scan_id
        )
        path = volume_dir / f"{scan_id}.raw"
        write_volume(volume, path)
        write_mask(lung, sidecar_mask_path(path, MaskKind.LUNG))
        write_mask(lesion, sidecar_mask_path(path, MaskKind.LESION))
        records.append(
            ScanRecord(
                scan_id=scan_id,
                patient_id=f"P{index:04d}",
                volume_path=path.resolve(),
                label=GradeLabel(scheme=LabelScheme.CORADS, value=int(grade)),
            )
        )
        logger.debug("Wrote phantom %s (grade %d)", scan_id, grade, extra={"scan_id": scan_id})

    manifest = out_dir / "manifest.csv"
    write_manifest(records, manifest)
    logger.info("Generated %d synthetic scans in %s", len(records), out_dir)
    return manifest
