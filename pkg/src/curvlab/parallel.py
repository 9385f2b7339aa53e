"""Order-preserving data-parallel map used by multistart searches and suites."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "CURVLAB_THREADS"


def thread_count(requested=None) -> int:
    """Explicit request, else the environment variable, else logical cores."""
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                requested = None
    if requested is None:
        requested = os.cpu_count() or 1
    return max(1, int(requested))


def thread_map(fn, items, threads=None):
    """[fn(x) for x in items], evaluated on a thread pool; results keep input order."""
    items = list(items)
    n = min(thread_count(threads), len(items)) if items else 1
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
