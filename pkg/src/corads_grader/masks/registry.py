"""Mask provider registry: picks a provider per mask kind in priority order."""

from __future__ import annotations

import logging

from corads_grader.dataset.schemas import ScanRecord
from corads_grader.errors import MaskError
from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind
from corads_grader.masks.base import MaskProvider, MaskSource, get_mask
from corads_grader.masks.external import ExternalFileMaskProvider
from corads_grader.masks.heuristic import HeuristicLesionProvider, HeuristicLungProvider

logger = logging.getLogger(__name__)


class MaskProviderRegistry:
    """Providers per mask kind, consulted in registration order.

    The first provider that has a mask for a scan wins, so registering external files before
    the heuristic gives "use the real mask when there is one".
    """

    def __init__(self) -> None:
        self._providers: dict[MaskKind, list[MaskProvider]] = {kind: [] for kind in MaskKind}

    def register(self, provider: MaskProvider) -> None:
        self._providers[provider.kind()].append(provider)
        logger.debug(
            "Mask provider registered: %s/%s", provider.kind().value, provider.source().value
        )

    def providers(self, kind: MaskKind) -> list[MaskProvider]:
        return list(self._providers[kind])

    def resolve(self, kind: MaskKind, scan_id: str) -> MaskProvider:
        """Return the first provider able to serve ``scan_id``.

        Raises MaskError if none can.
        """
        for provider in self._providers[kind]:
            if provider.has_mask(scan_id):
                return provider
        raise MaskError(f"{scan_id}: no provider for a {kind.value} mask")

    def masks_for(
        self, volume: CtVolume, with_lesion: bool
    ) -> tuple[BinaryMask, BinaryMask | None]:
        """Lung mask and, when asked for, the lesion mask gated by that lung mask."""
        lung = get_mask(self.resolve(MaskKind.LUNG, volume.scan_id), volume)
        lesion = None
        if with_lesion:
            lesion = get_mask(self.resolve(MaskKind.LESION, volume.scan_id), volume, lung)
        return lung, lesion


def build_registry(records: list[ScanRecord], source: str = "auto") -> MaskProviderRegistry:
    """Registry for a manifest.

    ``source`` is ``"external_file"`` (sidecar files only), ``"heuristic"`` (heuristics only) or
    ``"auto"`` (sidecar files where present, heuristics otherwise).
    """
    if source not in ("auto", MaskSource.EXTERNAL_FILE.value, MaskSource.HEURISTIC.value):
        raise ValueError(f"unknown mask source '{source}'")
    registry = MaskProviderRegistry()
    if source != MaskSource.HEURISTIC.value:
        for kind in MaskKind:
            registry.register(ExternalFileMaskProvider.from_sidecars(kind, records))
    if source != MaskSource.EXTERNAL_FILE.value:
        registry.register(HeuristicLungProvider())
        registry.register(HeuristicLesionProvider())
    return registry
