"""On-disk cache of preprocessed scans and the loader that fills it.

Entries live at ``<cache_dir>/<preprocess_hash>/<scan_id>.npz`` holding ``ct`` and, when it
was computed, ``lesion``. The hash covers the preprocessing config and the mask source, so runs
share entries only when both match. Hits and misses are counted as ``cache_hit`` /
``cache_miss`` in the global metrics.
"""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path

import numpy as np

from corads_grader.dataset.schemas import ScanRecord
from corads_grader.imaging.preprocess import PreprocessConfig, PreprocessedScan, preprocess_arrays
from corads_grader.imaging.readers import read_volume
from corads_grader.imaging.volume import ModelInput
from corads_grader.masks.registry import MaskProviderRegistry, build_registry
from corads_grader.metrics import metrics

logger = logging.getLogger(__name__)


def preprocess_hash(config: PreprocessConfig, mask_source: str) -> str:
    """Cache directory name: masks from another source give different inputs."""
    payload = f"{config.config_hash()}:{mask_source}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class PreprocessCache:
    def __init__(
        self,
        root: str | Path,
        config: PreprocessConfig,
        enabled: bool = True,
        mask_source: str = "auto",
    ) -> None:
        self.config = config
        self.enabled = enabled
        self.mask_source = mask_source
        self.directory = Path(root) / preprocess_hash(config, mask_source)

    def path_for(self, scan_id: str) -> Path:
        return self.directory / f"{scan_id}.npz"

    def get(self, scan_id: str) -> PreprocessedScan | None:
        path = self.path_for(scan_id)
        if not self.enabled or not path.is_file():
            return None
        with np.load(path) as data:
            ct = data["ct"]
            lesion = data["lesion"] if "lesion" in data.files else None
        return PreprocessedScan(scan_id=scan_id, ct=ct, lesion=lesion)

    def put(self, scan: PreprocessedScan) -> None:
        if not self.enabled:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        arrays = {"ct": scan.ct.astype(np.float32)}
        if scan.lesion is not None:
            arrays["lesion"] = scan.lesion.astype(np.uint8)
        path = self.path_for(scan.scan_id)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            np.savez_compressed(fh, **arrays)
        os.replace(tmp, path)


class ScanLoader:
    """Callable turning a record into a model input, preprocessing on a cache miss.

    Picklable, so data-loader workers can use it.
    """

    def __init__(
        self,
        records: list[ScanRecord],
        cache: PreprocessCache,
        with_lesion: bool,
    ) -> None:
        self.cache = cache
        self.with_lesion = with_lesion
        self.registry: MaskProviderRegistry = build_registry(records, cache.mask_source)

    def prepare(self, record: ScanRecord, with_lesion: bool | None = None) -> PreprocessedScan:
        with_lesion = self.with_lesion if with_lesion is None else with_lesion
        scan = self.cache.get(record.scan_id)
        if scan is not None and (scan.lesion is not None or not with_lesion):
            metrics.inc("cache_hit")
            return scan
        metrics.inc("cache_miss")
        volume = read_volume(record.volume_path, record.scan_id)
        lung, lesion = self.registry.masks_for(volume, with_lesion)
        scan = preprocess_arrays(volume, lung, lesion, self.cache.config)
        self.cache.put(scan)
        return scan

    def __call__(self, record: ScanRecord) -> ModelInput:
        geometry_hash = self.cache.config.config_hash()
        return self.prepare(record).to_model_input(self.with_lesion, geometry_hash)
