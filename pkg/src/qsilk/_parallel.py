"""Thread-cap handling. Work partitioning never depends on the thread count,
so results are bit-identical whatever QSILK_THREADS says."""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "QSILK_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(ENV_VAR, "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{ENV_VAR} must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{ENV_VAR} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def parallel_map(fn, items: list) -> list:
    """Apply fn to every item, possibly on worker threads; order preserved."""
    workers = min(thread_cap(), len(items))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
