"""Data-parallel helpers.

Work is always split into fixed-size chunks, independent of the thread
count, and results are merged in chunk order; a run with 1 thread and a run
with 8 threads therefore produce bit-identical output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigurationError

CHUNK = 512
ENV_VAR = "SNNFORGE_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get(ENV_VAR, "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigurationError(f"{ENV_VAR} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {threads}")
    return threads


def chunk_slices(n: int, chunk: int = CHUNK) -> list[slice]:
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def map_chunks(fn, n: int, threads: int | None = None, chunk: int = CHUNK) -> list:
    """Apply ``fn(slice)`` to consecutive chunks of ``range(n)``; results in order."""
    slices = chunk_slices(n, chunk)
    threads = resolve_threads(threads)
    if threads == 1 or len(slices) == 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, slices))
