"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "CIPHERPIPE_THREADS"


def worker_count() -> int:
    """Parallelism cap from CIPHERPIPE_THREADS (default 1 = sequential)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, jobs):
    """Map fn over jobs, in order, with at most worker_count() threads.

    Results are collected by job index, so the output is deterministic
    regardless of scheduling.
    """
    workers = worker_count()
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))
