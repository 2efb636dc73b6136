"""Masks produced elsewhere and stored next to the volumes."""

from __future__ import annotations

import logging
from pathlib import Path

from corads_grader.dataset.schemas import ScanRecord
from corads_grader.errors import MaskError
from corads_grader.imaging.readers import read_mask, sidecar_mask_path
from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind
from corads_grader.masks.base import MaskProvider, MaskSource

logger = logging.getLogger(__name__)


class ExternalFileMaskProvider(MaskProvider):
    """Serves masks from files registered per scan_id.

    Parameters
    ----------
    kind:
        Lung or lesion.
    paths:
        Optional initial mapping ``scan_id -> mask file``.
    """

    def __init__(self, kind: MaskKind, paths: dict[str, Path] | None = None) -> None:
        self._kind = kind
        self._paths: dict[str, Path] = dict(paths or {})

    @classmethod
    def from_sidecars(cls, kind: MaskKind, records: list[ScanRecord]) -> ExternalFileMaskProvider:
        """Register ``<volume_path>.<kind>.<ext>`` for every record where that file exists."""
        provider = cls(kind)
        for record in records:
            path = sidecar_mask_path(record.volume_path, kind)
            if path.is_file():
                provider.register(record.scan_id, path)
        logger.info(
            "Found %d of %d %s sidecar masks", len(provider._paths), len(records), kind.value
        )
        return provider

    def register(self, scan_id: str, path: str | Path) -> None:
        self._paths[scan_id] = Path(path)

    def kind(self) -> MaskKind:
        return self._kind

    def source(self) -> MaskSource:
        return MaskSource.EXTERNAL_FILE

    def has_mask(self, scan_id: str) -> bool:
        path = self._paths.get(scan_id)
        return path is not None and path.is_file()

    def produce(self, volume: CtVolume, lung_mask: BinaryMask | None = None) -> BinaryMask:
        path = self._paths.get(volume.scan_id)
        if path is None:
            raise MaskError(f"{volume.scan_id}: no {self._kind.value} mask registered")
        if not path.is_file():
            raise MaskError(f"{volume.scan_id}: {self._kind.value} mask file missing: {path}")
        mask = read_mask(path, self._kind)
        mask.check_aligned(volume)
        return mask
