import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``LTSI_LAB_THREADS``, else 1."""
    if threads is None:
        threads = int(os.environ.get("LTSI_LAB_THREADS", "1") or 1)
    return max(1, int(threads))


def parallel_map(fn, items, threads: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; output order is input order."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
