"""Environment switches."""

import os

DISABLE_NUMBA_ENV = "SPARSEGNN_DISABLE_NUMBA"
THREADS_ENV = "SPARSEGNN_THREADS"


def numba_disabled() -> bool:
    return os.environ.get(DISABLE_NUMBA_ENV, "").strip().lower() not in ("", "0", "false", "no")


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, then ``SPARSEGNN_THREADS``, then the core count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if env:
            threads = int(env)
        else:
            threads = os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads
