"""Order-preserving map over independent jobs."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def parallel_map(fn: Callable, tasks: Iterable, workers: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally across processes.

    Results come back in task order regardless of completion order.
    """
    tasks: Sequence = list(tasks)
    workers = min(int(workers or 1), len(tasks)) if tasks else 1
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
