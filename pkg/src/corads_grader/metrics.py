"""In-process pipeline counters and phase timings.

Counters track preprocessing cache lookups (``cache_hit`` / ``cache_miss``); timers track
wall-clock seconds per pipeline phase (``preprocess_scan``, ``train_batch``, ``validation``,
``predict``, ``bootstrap``, ``ablation.<point>``). Run metadata stores the timer snapshot and
the ablation summary reports the cache hit rate.
"""

from __future__ import annotations

import threading
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Generator


@dataclass
class PhaseTiming:
    """Running totals for one phase, in seconds."""

    count: int = 0
    total_s: float = 0.0
    max_s: float = 0.0

    def add(self, seconds: float) -> None:
        self.count += 1
        self.total_s += seconds
        self.max_s = max(self.max_s, seconds)

    @property
    def mean_s(self) -> float:
        return self.total_s / self.count if self.count else 0.0

    def as_dict(self) -> dict[str, float | int]:
        return {
            "count": self.count,
            "total_s": round(self.total_s, 4),
            "mean_s": round(self.mean_s, 4),
            "max_s": round(self.max_s, 4),
        }


@dataclass
class MetricsCollector:
    """Thread-safe counters and phase timers shared by the pipeline stages."""

    _counters: Counter[str] = field(default_factory=Counter)
    _phases: dict[str, PhaseTiming] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def inc(self, name: str, amount: int = 1) -> None:
        with self._lock:
            self._counters[name] += amount

    def count(self, name: str) -> int:
        with self._lock:
            return self._counters[name]

    def record_time(self, phase: str, seconds: float) -> None:
        with self._lock:
            self._phases.setdefault(phase, PhaseTiming()).add(seconds)

    @contextmanager
    def timer(self, phase: str) -> Generator[None, None, None]:
        """Time the block under ``phase``; failed blocks are recorded too."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record_time(phase, time.perf_counter() - start)

    def hit_rate(self, prefix: str) -> float | None:
        """``hits / (hits + misses)`` over ``<prefix>_hit`` / ``<prefix>_miss``; None if unused."""
        with self._lock:
            hits = self._counters[f"{prefix}_hit"]
            misses = self._counters[f"{prefix}_miss"]
        lookups = hits + misses
        return hits / lookups if lookups else None

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "counters": {k: v for k, v in self._counters.items() if v},
                "timers": {k: v.as_dict() for k, v in sorted(self._phases.items())},
            }

    def reset(self) -> None:
        with self._lock:
            self._counters.clear()
            self._phases.clear()


metrics = MetricsCollector()
