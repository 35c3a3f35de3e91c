"""Counter-based random substreams.

Every random quantity is drawn from a Philox generator keyed by the run seed
plus integer coordinates (trial, chunk, ...), so results do not depend on
how work is scheduled.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the coordinates ``keys`` under ``seed``."""
    if int(seed) < 0 or int(seed) >= 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def map_ordered(fn, items, workers: int = 1):
    """``[fn(x) for x in items]``, optionally on a thread pool; order preserved."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
