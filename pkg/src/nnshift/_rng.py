"""Derived random streams.

Every consumer gets its own generator keyed by ``(master_seed, *labels)``.
Streams with different label paths are statistically independent, and a
stream does not depend on which other streams were drawn before it, so
serial and parallel runs see identical numbers.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(label: int | str) -> int:
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    if label < 0:
        raise ValueError(f"stream labels must be non-negative, got {label}")
    return int(label)


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, *labels: int | str) -> np.random.Generator:
    """Return the generator for the stream ``labels`` under ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(_key(x) for x in labels))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *labels: int | str) -> int:
    """A 64-bit seed for a child stream, so the child can be re-run on its own."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(_key(x) for x in labels))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replication_seed(master_seed: int, rep: int) -> int:
    return derive_seed(master_seed, "replication", rep)
