"""Order-preserving parallel map; results never depend on the worker count."""
from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, workers=1):
    items = list(items)
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(v) for v in items]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(fn, items))
