import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "RPF_THREADS"


def resolve_threads(threads=None):
    """Worker count: explicit argument, else ``RPF_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(ENV_THREADS, "").strip()
        threads = int(raw) if raw else 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def pmap(fn, items, threads=None):
    """Ordered map over ``items``; parallel when more than one thread is allowed.

    Kernels release the GIL, so threads give real parallelism. Output order
    always matches input order.
    """
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
