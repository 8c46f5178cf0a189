"""Ordered thread-pool map; worker count capped by ``ENTROPIC_TAIL_THREADS``."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "ENTROPIC_TAIL_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, min(8, os.cpu_count() or 1))


def pmap(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly concurrent; order is preserved."""
    items = list(items)
    threads = worker_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
