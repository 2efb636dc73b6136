"""Named random sub-streams derived from a single base seed.

Every consumer of randomness asks for its own stream (``rng_for(seed, "sampling")``,
``rng_for(seed, "augment", batch, slot)``), so adding workers or reordering calls never shifts
another consumer's sequence.
"""

from __future__ import annotations

import zlib

import numpy as np


def _spawn_key(names: tuple[str | int, ...]) -> tuple[int, ...]:
    key: list[int] = []
    for name in names:
        if isinstance(name, int):
            key.append(name)
        else:
            key.append(zlib.crc32(name.encode("utf-8")))
    return tuple(key)


def seed_sequence(seed: int, *names: str | int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=_spawn_key(names))


def rng_for(seed: int, *names: str | int) -> np.random.Generator:
    """Return an independent generator for the sub-stream ``names`` of ``seed``."""
    return np.random.default_rng(seed_sequence(seed, *names))


def torch_seed_for(seed: int, *names: str | int) -> int:
    """Return a 63-bit integer seed for ``torch.manual_seed`` on the given sub-stream."""
    state = seed_sequence(seed, *names).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)
