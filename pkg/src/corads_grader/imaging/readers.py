"""Volume readers and the repository's canonical on-disk format.

Canonical format: a raw little-endian file in (z, y, x) order plus a sidecar JSON header at
``<path>.json`` holding ``{"shape": [z, y, x], "spacing_mm": [z, y, x], "dtype": ...}``.
CT volumes are float32 Hounsfield units, masks uint8. Other containers plug in through
:class:`ReaderRegistry`, keyed by file suffix.
"""

from __future__ import annotations

import json
import logging
import os
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from corads_grader.errors import DataError
from corads_grader.imaging.volume import BinaryMask, CtVolume, MaskKind, Spacing

logger = logging.getLogger(__name__)

RAW_SUFFIX = ".raw"
_DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1")}


class VolumeReader(ABC):
    """Reads a 3D array and its (z, y, x) voxel spacing from a file."""

    @abstractmethod
    def suffixes(self) -> tuple[str, ...]:
        """File suffixes this reader handles, e.g. ``(".nii", ".nii.gz")``."""

    @abstractmethod
    def read(self, path: Path) -> tuple[np.ndarray, Spacing]:
        """Return ``(array, spacing_mm)`` with axis order (z, y, x)."""


class RawVolumeReader(VolumeReader):
    def suffixes(self) -> tuple[str, ...]:
        return (RAW_SUFFIX,)

    def read(self, path: Path) -> tuple[np.ndarray, Spacing]:
        header_path = Path(f"{path}.json")
        if not path.is_file() or not header_path.is_file():
            raise DataError(f"volume or header missing: {path}")
        header = json.loads(header_path.read_text(encoding="utf-8"))
        try:
            shape = tuple(int(n) for n in header["shape"])
            spacing = tuple(float(s) for s in header["spacing_mm"])
            dtype = _DTYPES[header.get("dtype", "float32")]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed header {header_path}: {exc}") from None
        data = np.fromfile(path, dtype=dtype)
        if data.size != int(np.prod(shape)):
            raise DataError(f"{path}: {data.size} values on disk, header shape {shape}")
        return data.reshape(shape), spacing  # type: ignore[return-value]


class SimpleITKReader(VolumeReader):
    """NIfTI / MetaImage reader; needs the optional ``io`` extra."""

    def suffixes(self) -> tuple[str, ...]:
        return (".nii", ".nii.gz", ".mha", ".mhd")

    def read(self, path: Path) -> tuple[np.ndarray, Spacing]:
        try:
            import SimpleITK as sitk
        except ImportError:
            raise DataError(
                f"cannot read {path}: install the 'io' extra (SimpleITK)"
            ) from None
        image = sitk.ReadImage(str(path))
        # SimpleITK reports spacing as (x, y, z)
        spacing = tuple(float(s) for s in reversed(image.GetSpacing()))
        return sitk.GetArrayFromImage(image), spacing  # type: ignore[return-value]


class ReaderRegistry:
    """Registry of volume readers, looked up by file suffix."""

    def __init__(self) -> None:
        self._readers: dict[str, VolumeReader] = {}

    def register(self, reader: VolumeReader) -> None:
        """Register a reader for each of its suffixes.

        Raises ValueError if a suffix is already taken.
        """
        for suffix in reader.suffixes():
            if suffix in self._readers:
                raise ValueError(f"Suffix '{suffix}' already has a reader")
            self._readers[suffix] = reader
        logger.debug("Volume reader registered: %s", type(reader).__name__)

    def get(self, path: Path) -> VolumeReader:
        name = path.name.lower()
        # Longest suffix first so ".nii.gz" beats ".gz"
        for suffix in sorted(self._readers, key=len, reverse=True):
            if name.endswith(suffix):
                return self._readers[suffix]
        raise DataError(f"no volume reader for '{path.name}'")

    def list_suffixes(self) -> list[str]:
        return sorted(self._readers)


readers = ReaderRegistry()
readers.register(RawVolumeReader())
readers.register(SimpleITKReader())


def read_volume(path: str | Path, scan_id: str | None = None) -> CtVolume:
    path = Path(path)
    array, spacing = readers.get(path).read(path)
    return CtVolume(
        voxels=np.asarray(array, dtype=np.float32), spacing_mm=spacing, scan_id=scan_id or path.stem
    )


def read_mask(path: str | Path, kind: MaskKind) -> BinaryMask:
    path = Path(path)
    array, spacing = readers.get(path).read(path)
    return BinaryMask(voxels=array, spacing_mm=spacing, kind=kind)


def _write_raw(array: np.ndarray, spacing: Spacing, path: Path, dtype: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "shape": list(array.shape),
        "spacing_mm": [float(s) for s in spacing],
        "dtype": dtype,
    }
    tmp = path.with_name(path.name + ".tmp")
    np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tofile(tmp)
    os.replace(tmp, path)
    header_tmp = path.with_name(path.name + ".json.tmp")
    header_tmp.write_text(json.dumps(header), encoding="utf-8")
    os.replace(header_tmp, Path(f"{path}.json"))


def write_volume(volume: CtVolume, path: str | Path) -> None:
    """Write a volume in the canonical raw format (the path should end in ``.raw``)."""
    _write_raw(volume.voxels, volume.spacing_mm, Path(path), "float32")


def write_mask(mask: BinaryMask, path: str | Path) -> None:
    _write_raw(mask.voxels, mask.spacing_mm, Path(path), "uint8")


def sidecar_mask_path(volume_path: str | Path, kind: MaskKind) -> Path:
    """Mask path by convention: ``<volume_path>.<kind>.<ext>`` (same container as the volume)."""
    volume_path = Path(volume_path)
    name = volume_path.name
    ext = next(
        (s for s in sorted(readers.list_suffixes(), key=len, reverse=True) if name.endswith(s)),
        volume_path.suffix,
    )
    return volume_path.with_name(f"{name}.{kind.value}{ext}")
