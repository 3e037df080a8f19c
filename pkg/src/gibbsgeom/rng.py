"""Counter-based random streams keyed by (seed, purpose, indices).

Every random draw in the package comes from a Philox generator whose key is
derived from the user seed plus a tuple describing *why* the numbers are
needed (replication index, trajectory segment, marks, ...).  Two runs with the
same seed therefore see the same numbers no matter how work is split across
threads.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    value = int(part)
    if value < 0:
        raise ValueError(f"stream key components must be non-negative, got {part!r}")
    return value


def stream(seed: int, *key) -> np.random.Generator:
    """Return an independent generator for ``seed`` and the given key path."""
    if int(seed) < 0:
        raise ValueError("seed must be a non-negative integer")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or Generator is required")
    return stream(int(rng))
