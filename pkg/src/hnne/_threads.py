"""Worker-count plumbing.

Every parallel section (KD-tree queries, BLAS) reads its worker count from
here so that a single ``threads`` setting caps all of them. Results never
depend on the value.
"""
from __future__ import annotations

import contextlib
import contextvars
import os

from threadpoolctl import threadpool_limits

_THREADS: contextvars.ContextVar[int | None] = contextvars.ContextVar("hnne_threads", default=None)


def get_threads() -> int:
    value = _THREADS.get()
    if value is not None:
        return value
    env = os.environ.get("HNNE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@contextlib.contextmanager
def thread_limit(threads: int | None):
    """Cap worker threads for the duration of the block (``None`` keeps the current setting)."""
    if threads is None:
        yield
        return
    threads = max(1, int(threads))
    token = _THREADS.set(threads)
    try:
        with threadpool_limits(limits=threads):
            yield
    finally:
        _THREADS.reset(token)
