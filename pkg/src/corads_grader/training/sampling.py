"""Class-balanced sampling of training scans.

Each draw first picks a grade uniformly, then a scan uniformly within that grade, from the
``sampling`` sub-stream of the seed. The batch sampler hands the data loader
``(record_index, batch, slot)`` triples so each sample's augmentation stream is fixed by its
position in the stream, whatever the number of loader workers.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Iterator

import numpy as np
from torch.utils.data import Sampler

from corads_grader.dataset.schemas import ScanRecord, gradable_values
from corads_grader.errors import DataError, LabelError
from corads_grader.seeding import rng_for

logger = logging.getLogger(__name__)

SampleKey = tuple[int, int, int]


def _indices_by_class(records: list[ScanRecord]) -> dict[int, list[int]]:
    schemes = {r.scheme for r in records}
    if len(schemes) != 1:
        raise LabelError(f"training records need exactly one label scheme, got {len(schemes)}")
    by_class: dict[int, list[int]] = defaultdict(list)
    for index, record in enumerate(records):
        by_class[record.label.value].append(index)
    return by_class


def class_members(records: list[ScanRecord]) -> list[list[int]]:
    """Record indices per gradable class, in class order; every class must be present."""
    if not records:
        raise DataError("no training records")
    by_class = _indices_by_class(records)
    classes = gradable_values(records[0].scheme)
    empty = [c for c in classes if not by_class.get(c)]
    if empty:
        raise DataError(f"classes without training scans: {', '.join(map(str, empty))}")
    return [by_class[c] for c in classes]


def balanced_index_stream(records: list[ScanRecord], seed: int) -> Iterator[int]:
    """Infinite stream of record indices, class-uniform."""
    members = class_members(records)
    rng = rng_for(seed, "sampling")
    while True:
        chosen = members[int(rng.integers(len(members)))]
        yield chosen[int(rng.integers(len(chosen)))]


def uniform_index_stream(records: list[ScanRecord], seed: int) -> Iterator[int]:
    """Infinite stream of record indices drawn uniformly over scans (no balancing)."""
    if not records:
        raise DataError("no training records")
    rng = rng_for(seed, "sampling")
    while True:
        yield int(rng.integers(len(records)))


def balanced_batch_stream(
    records: list[ScanRecord], batch_size: int, seed: int
) -> Iterator[list[ScanRecord]]:
    """Infinite deterministic stream of class-balanced batches of records."""
    indices = balanced_index_stream(records, seed)
    while True:
        yield [records[next(indices)] for _ in range(batch_size)]


class StreamBatchSampler(Sampler[list[SampleKey]]):
    """Batch sampler over an index stream, bounded by ``max_batches``. Batches count from 1."""

    def __init__(
        self,
        records: list[ScanRecord],
        batch_size: int,
        seed: int,
        max_batches: int,
        balanced: bool = True,
    ) -> None:
        self.records = records
        self.batch_size = batch_size
        self.seed = seed
        self.max_batches = max_batches
        self.balanced = balanced
        # Fail at construction rather than inside a loader worker
        if balanced:
            class_members(records)

    def __len__(self) -> int:
        return self.max_batches

    def __iter__(self) -> Iterator[list[SampleKey]]:
        stream = (balanced_index_stream if self.balanced else uniform_index_stream)(
            self.records, self.seed
        )
        for batch in range(1, self.max_batches + 1):
            yield [(next(stream), batch, slot) for slot in range(self.batch_size)]


def balanced_resample(records: list[ScanRecord]) -> list[ScanRecord]:
    """Deterministic class-balanced resample: every present class is cycled up to the size of
    the largest one."""
    if not records:
        return []
    by_class = _indices_by_class(records)
    largest = max(len(v) for v in by_class.values())
    resampled = []
    for value in sorted(by_class):
        members = by_class[value]
        resampled.extend(records[members[i % len(members)]] for i in range(largest))
    return resampled


def class_frequencies(indices: list[int], records: list[ScanRecord]) -> dict[int, float]:
    values = np.array([records[i].label.value for i in indices])
    uniques, counts = np.unique(values, return_counts=True)
    return {int(u): float(c) / len(values) for u, c in zip(uniques, counts)}
