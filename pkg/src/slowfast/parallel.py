"""Order-preserving map over independent work items."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "SLOWFAST_WORKERS"


def worker_count(requested: int | None = None) -> int:
    """Explicit request, else ``$SLOWFAST_WORKERS``, else 1."""
    if requested is not None:
        return max(1, int(requested))
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, run on a thread pool when more than one worker is set.

    Results keep input order, so outputs do not depend on scheduling.
    """
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
