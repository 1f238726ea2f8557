"""Ordered parallel mapping for independent episode/cell workloads.

Results always come back in submission order, so aggregation (and therefore
floating-point reduction) is identical whatever the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def available_workers() -> int:
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int | None = None) -> list[R]:
    """Map fn over items, preserving input order.

    ``workers`` <= 1 (or a single item) runs sequentially; None uses the
    available parallelism.
    """
    items = list(items)
    if workers is None:
        workers = available_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
