"""Seed plumbing.

Every stochastic routine takes an explicit seed and builds its own
``numpy.random.Generator``; there is no module-level RNG state. Streams are
derived with :class:`numpy.random.SeedSequence`, so child streams spawned from
one root are independent and reproducible regardless of evaluation order.
"""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np

SeedLike = Union[int, np.integer, np.random.SeedSequence]


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (bool, float)) or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.SeedSequence(int(seed))


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed)))


def spawn(seed: SeedLike, n: int) -> list[np.random.SeedSequence]:
    """Split ``seed`` into ``n`` independent child streams.

    Children are derived from the spawn key rather than from the parent's
    internal counter, so calling this twice on the same seed gives the same
    children.
    """
    parent = seed_sequence(seed)
    return [
        np.random.SeedSequence(parent.entropy, spawn_key=parent.spawn_key + (i,))
        for i in range(n)
    ]


def _key(part: object) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(root: int, *parts: object) -> int:
    """Hash ``root`` and a tuple of labels into a 64-bit integer seed.

    Strings are hashed with CRC-32 so the result does not depend on Python's
    per-process hash randomisation.
    """
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(_key(p) for p in parts))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
