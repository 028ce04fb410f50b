"""Replicate fan-out.

Replicate keys are split into contiguous chunks, each chunk is simulated by a
compiled kernel that releases the GIL, and results come back in chunk order.
The worker count is read from ``CRWSIM_WORKERS`` (default: available CPUs).
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

ENV_VAR = "CRWSIM_WORKERS"


def worker_count():
    raw = os.environ.get(ENV_VAR)
    if raw:
        return max(1, int(raw))
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def fan_out(fn, keys, workers=None):
    """Apply ``fn`` to chunks of ``keys``; results listed in replicate order."""
    workers = workers or worker_count()
    if workers == 1 or len(keys) < 2 * workers:
        return [fn(keys)]
    chunks = np.array_split(keys, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
