"""Thread-pool helpers for corpus-sized batch work.

The worker count comes from, in priority order: the COPRGUARD_THREADS
environment variable, then an explicit request, then the CPU count. Mapping
preserves input order, so parallelism never changes what gets computed, only
how fast.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

from .errors import DomainError

ENV_THREADS = "COPRGUARD_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(requested: int | None = None) -> int:
    """Pick the worker count. The environment variable wins over the argument."""
    env = os.environ.get(ENV_THREADS)
    if env is not None and env.strip():
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"{ENV_THREADS} must be an integer, got {env!r}") from None
        if n < 1:
            raise DomainError(f"{ENV_THREADS} must be >= 1, got {n}")
        return n
    if requested is not None:
        if requested < 1:
            raise DomainError(f"thread count must be >= 1, got {requested}")
        return requested
    return os.cpu_count() or 1


def pmap(fn: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> list[R]:
    """Map fn over items with a thread pool, results in input order."""
    n = resolve_threads(threads)
    items = list(items)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def make_mapper(threads: int | None = None) -> Callable[[Callable[[T], R], Iterable[T]], list[R]]:
    """Bind a thread count into a (fn, items) -> results callable."""
    def mapper(fn, items):
        return pmap(fn, list(items), threads=threads)
    return mapper
