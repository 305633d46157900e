"""Thread-pool plumbing honoring the REPEATERLAB_THREADS cap.

Work items must be pure and independent; results are always assembled in
input order, so the thread count can never change any output.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "REPEATERLAB_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(ENV_VAR)
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError as exc:
            raise ValueError(f"{ENV_VAR} must be an integer, got {raw!r}") from exc
        return max(1, cap)
    return max(1, os.cpu_count() or 1)


def parallel_map(fn, items) -> list:
    """Ordered map over items, using at most thread_cap() worker threads."""
    items = list(items)
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
