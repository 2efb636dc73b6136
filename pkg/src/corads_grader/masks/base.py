"""Mask provider abstract base class.

A provider turns a CT volume into a lung or lesion mask aligned with it. Providers hide where
the mask comes from (a segmentation run elsewhere and stored on disk, or a heuristic computed on
the fly) so preprocessing never needs to know.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from enum import Enum

from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind


class MaskSource(str, Enum):
    EXTERNAL_FILE = "external_file"
    HEURISTIC = "heuristic"


class MaskProvider(ABC):
    """Abstract base class every mask source must implement."""

    @abstractmethod
    def kind(self) -> MaskKind:
        """Which mask this provider produces (lung or lesion)."""

    @abstractmethod
    def source(self) -> MaskSource:
        """Where masks come from."""

    @abstractmethod
    def has_mask(self, scan_id: str) -> bool:
        """Whether this provider can produce a mask for ``scan_id``."""

    @abstractmethod
    def produce(self, volume: CtVolume, lung_mask: BinaryMask | None = None) -> BinaryMask:
        """Produce the mask for ``volume``.

        Lesion providers may use ``lung_mask`` to gate their output.
        """


def get_mask(
    provider: MaskProvider, volume: CtVolume, lung_mask: BinaryMask | None = None
) -> BinaryMask:
    """Produce a mask through ``provider`` and check it is binary and aligned with ``volume``."""
    mask = provider.produce(volume, lung_mask)
    if mask.kind is not provider.kind():
        raise TypeError(f"provider declared {provider.kind().value}, produced {mask.kind.value}")
    mask.check_aligned(volume)
    return mask
