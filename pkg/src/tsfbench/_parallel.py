from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Worker cap from ``TSF_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get("TSF_THREADS", "").strip()
    n = int(raw) if raw else 0
    if n < 0:
        raise ValueError("TSF_THREADS must be non-negative")
    return n or (os.cpu_count() or 1)


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map preserving input order; threads only when more than one worker is allowed."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
