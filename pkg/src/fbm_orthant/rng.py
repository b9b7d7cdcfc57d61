"""Named, independent random streams on top of numpy's counter-based Philox.

A stream is identified by ``(seed, *key)`` where key parts are ints or
strings. Strings are hashed with CRC-32 so the mapping is stable across
platforms and Python versions. Two different keys never share counters.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream key integers must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *key) -> np.random.Generator:
    """Generator for the stream named ``key`` under root ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class StreamFactory:
    """Hands out sub-streams of one root seed; ``factory("paths", 3)`` etc."""

    def __init__(self, seed: int, *prefix):
        self.seed = int(seed)
        self.prefix = prefix

    def __call__(self, *key) -> np.random.Generator:
        return stream(self.seed, *self.prefix, *key)

    def child(self, *key) -> "StreamFactory":
        return StreamFactory(self.seed, *self.prefix, *key)

    def __repr__(self):
        return f"StreamFactory(seed={self.seed}, prefix={self.prefix!r})"


def chunks(n: int, size: int) -> list[tuple[int, int]]:
    """``(index, length)`` pairs covering ``n`` items in blocks of ``size``."""
    return [(k, min(size, n - k * size)) for k in range((n + size - 1) // size)]


def run_chunks(fn, jobs, threads: int = 1) -> list:
    """``[fn(*job) for job in jobs]``, optionally on a thread pool; order is kept."""
    if threads <= 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))
