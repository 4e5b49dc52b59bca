from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, List, Optional

from app.conf.config import get_app_settings
from app.utils.logger import log

MapFn = Callable[[Callable, Iterable], List]


def worker_count(requested: Optional[int] = None, n_tasks: Optional[int] = None) -> int:
    """Requested workers, capped by DASH_THREADS and by the number of tasks."""
    cap = get_app_settings().dash_threads
    workers = min(requested or cap, cap)
    if n_tasks is not None:
        workers = min(workers, max(n_tasks, 1))
    return max(workers, 1)


def serial_map(fn: Callable, items: Iterable) -> List:
    return [fn(item) for item in items]


@contextmanager
def get_worker_pool(requested: Optional[int] = None, n_tasks: Optional[int] = None) -> Iterator[MapFn]:
    """
    Yields an order-preserving map over independent tasks. One worker runs in
    process; more use a process pool, so `fn` and the items must be picklable.
    """
    workers = worker_count(requested, n_tasks)
    if workers == 1:
        yield serial_map
        return
    log(f"Starting process pool with {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield lambda fn, items: list(pool.map(fn, items))
