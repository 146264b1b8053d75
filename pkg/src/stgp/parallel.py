"""Bounded worker pool for replicate/fold jobs.

Jobs are seeded independently by index, and results come back in job
order, so outputs do not depend on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers: int) -> int:
    return workers if workers and workers > 0 else (os.cpu_count() or 1)


def parallel_map(fn, jobs, workers: int = 0) -> list:
    jobs = list(jobs)
    n = min(resolve_workers(workers), len(jobs))
    if n <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))
