"""Lung and lesion mask providers."""

from corads_grader.masks.base import MaskProvider, MaskSource, get_mask
from corads_grader.masks.external import ExternalFileMaskProvider
from corads_grader.masks.heuristic import (
    HeuristicLesionProvider,
    HeuristicLungProvider,
    heuristic_lesion,
    heuristic_lung,
)
from corads_grader.masks.registry import MaskProviderRegistry, build_registry

__all__ = [
    "ExternalFileMaskProvider",
    "HeuristicLesionProvider",
    "HeuristicLungProvider",
    "MaskProvider",
    "MaskProviderRegistry",
    "MaskSource",
    "build_registry",
    "get_mask",
    "heuristic_lesion",
    "heuristic_lung",
]
