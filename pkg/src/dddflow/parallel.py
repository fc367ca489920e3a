"""Deterministic worker-count-independent parallel reduction.

Work is split into fixed-size chunks whose boundaries do not depend on
the number of workers; per-chunk partials are reduced sequentially in
chunk order.  Identical inputs therefore give bit-identical results for
any DDD_THREADS setting.
"""

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["worker_count", "chunk_ranges", "map_reduce"]

CHUNK = 32


def worker_count():
    """Worker cap from DDD_THREADS, defaulting to min(4, cpu count)."""
    env = os.environ.get("DDD_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"DDD_THREADS must be an integer, got {env!r}")
        return max(1, n)
    return max(1, min(4, os.cpu_count() or 1))


def chunk_ranges(n_items, chunk=CHUNK):
    return [(i, min(i + chunk, n_items)) for i in range(0, n_items, chunk)]


def map_reduce(fn, n_items, workers=None, chunk=CHUNK):
    """Apply fn(lo, hi) over fixed chunks; sum the partial tuples in order.

    fn must return a tuple of numpy arrays (or scalars); the reduction
    adds them elementwise, chunk by chunk, in index order.
    """
    ranges = chunk_ranges(n_items, chunk)
    if not ranges:
        return None
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(ranges) == 1:
        partials = [fn(lo, hi) for lo, hi in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda r: fn(*r), ranges))
    acc = list(partials[0])
    for part in partials[1:]:
        for i, a in enumerate(part):
            acc[i] = acc[i] + a
    return tuple(acc)
