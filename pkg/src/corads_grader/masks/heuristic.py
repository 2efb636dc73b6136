"""Threshold-and-components stand-ins for the lung and lesion segmenters.

HU windows are fixed radiology ranges: aerated lung lies in (-1000, -400) HU, ground-glass
opacity through consolidation in [-700, 100] HU. They make the pipeline runnable without
external segmentation models; swap in :class:`ExternalFileMaskProvider` for real masks.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind
from corads_grader.masks.base import MaskProvider, MaskSource

logger = logging.getLogger(__name__)

LUNG_HU_RANGE = (-1000.0, -400.0)
LESION_HU_RANGE = (-700.0, 100.0)
MIN_LESION_VOXELS = 5
CLOSING_ITERATIONS = 2

_CONNECTIVITY = ndimage.generate_binary_structure(3, 1)


def _border_labels(labels: np.ndarray) -> np.ndarray:
    faces = [labels[0], labels[-1], labels[:, 0], labels[:, -1], labels[:, :, 0], labels[:, :, -1]]
    return np.unique(np.concatenate([f.ravel() for f in faces]))


def heuristic_lung(volume: CtVolume) -> BinaryMask:
    """Aerated-lung mask: interior air-like components, two largest, closed and hole-filled."""
    hu = volume.voxels
    candidates = (hu > LUNG_HU_RANGE[0]) & (hu < LUNG_HU_RANGE[1])
    labels, n_labels = ndimage.label(candidates, structure=_CONNECTIVITY)

    mask = np.zeros(hu.shape, dtype=bool)
    if n_labels:
        sizes = np.bincount(labels.ravel(), minlength=n_labels + 1)
        sizes[0] = 0
        sizes[_border_labels(labels)] = 0
        keep = [int(i) for i in np.argsort(sizes)[::-1][:2] if sizes[i] > 0]
        if keep:
            mask = np.isin(labels, keep)
            # scipy erodes against a zero border; never drop voxels that were already lung
            mask |= ndimage.binary_closing(
                mask, structure=_CONNECTIVITY, iterations=CLOSING_ITERATIONS
            )
            for z in range(mask.shape[0]):
                mask[z] = ndimage.binary_fill_holes(mask[z])

    logger.debug(
        "Heuristic lung for %s: %d voxels", volume.scan_id, int(mask.sum()),
        extra={"scan_id": volume.scan_id},
    )
    return BinaryMask(voxels=mask, spacing_mm=volume.spacing_mm, kind=MaskKind.LUNG)


def heuristic_lesion(volume: CtVolume, lung_mask: BinaryMask) -> BinaryMask:
    """GGO/consolidation mask: lesion-range voxels inside the lung, components >= 5 voxels."""
    lung_mask.check_aligned(volume)
    hu = volume.voxels
    candidates = (
        lung_mask.voxels.astype(bool) & (hu >= LESION_HU_RANGE[0]) & (hu <= LESION_HU_RANGE[1])
    )
    labels, n_labels = ndimage.label(candidates, structure=_CONNECTIVITY)
    mask = np.zeros(hu.shape, dtype=bool)
    if n_labels:
        sizes = np.bincount(labels.ravel(), minlength=n_labels + 1)
        sizes[0] = 0
        mask = np.isin(labels, np.flatnonzero(sizes >= MIN_LESION_VOXELS))
    return BinaryMask(voxels=mask, spacing_mm=volume.spacing_mm, kind=MaskKind.LESION)


class HeuristicLungProvider(MaskProvider):
    def kind(self) -> MaskKind:
        return MaskKind.LUNG

    def source(self) -> MaskSource:
        return MaskSource.HEURISTIC

    def has_mask(self, scan_id: str) -> bool:
        return True

    def produce(self, volume: CtVolume, lung_mask: BinaryMask | None = None) -> BinaryMask:
        return heuristic_lung(volume)


class HeuristicLesionProvider(MaskProvider):
    def kind(self) -> MaskKind:
        return MaskKind.LESION

    def source(self) -> MaskSource:
        return MaskSource.HEURISTIC

    def has_mask(self, scan_id: str) -> bool:
        return True

    def produce(self, volume: CtVolume, lung_mask: BinaryMask | None = None) -> BinaryMask:
        if lung_mask is None:
            lung_mask = heuristic_lung(volume)
        return heuristic_lesion(volume, lung_mask)
