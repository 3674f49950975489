"""Seed-derived random streams.

A stream is keyed by ``(master_seed, key)`` through ``numpy.random.SeedSequence``
spawn keys, so the draws of one key never depend on how many other keys are
consumed or in which order.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 2048


def stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(key),)))


def chunks(runs: int, size: int = CHUNK):
    """Yield ``(key, start, stop)`` covering ``range(runs)`` in fixed blocks."""
    for key, start in enumerate(range(0, runs, size)):
        yield key, start, min(start + size, runs)


_workers = 1


def set_workers(n: int) -> None:
    """Cap the number of threads used by :func:`fan_out` (1 runs inline)."""
    global _workers
    _workers = max(1, int(n))


def fan_out(fn, blocks):
    """``[fn(*b) for b in blocks]``, possibly on a thread pool; order is kept."""
    blocks = list(blocks)
    if _workers == 1 or len(blocks) < 2:
        return [fn(*b) for b in blocks]
    with ThreadPoolExecutor(max_workers=_workers) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))
