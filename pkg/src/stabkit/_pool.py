"""Minimal process-pool map with a sequential fallback.

Jobs are mapped in input order so results are independent of worker
scheduling; callers rely on this for reproducibility.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

__all__ = ["resolve_workers", "pmap"]


def resolve_workers(workers: int | None) -> int:
    """Explicit argument wins, then STABKIT_THREADS, then 1."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("STABKIT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def pmap(fn, items, workers: int | None = None, initializer=None, initargs=()):
    """Ordered map, in-process when workers <= 1."""
    items = list(items)
    w = resolve_workers(workers)
    if w <= 1 or len(items) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * w))
    with ProcessPoolExecutor(
        max_workers=w, initializer=initializer, initargs=initargs
    ) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
