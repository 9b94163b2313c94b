"""Ordered thread-pool map; results land in input order so reductions stay fixed-order."""
from concurrent.futures import ThreadPoolExecutor
import os

_threads = os.cpu_count() or 1


def set_threads(n):
    global _threads
    _threads = max(1, int(n))
    return _threads


def get_threads():
    return _threads


def pmap(fn, items, threads=None):
    items = list(items)
    n = _threads if threads is None else max(1, int(threads))
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
