"""SpMM, SDDMM and FusedMM entry points.

All kernels split output rows into contiguous ranges holding roughly equal
numbers of nonzeros and run one range per worker thread. A row is always
computed start to finish by one worker, so results do not depend on the
thread count.

The JIT backend is used unless ``SPARSEGNN_DISABLE_NUMBA`` is set or numba
is not importable; the pure-numpy backend computes the same results.
"""

from __future__ import annotations

import contextlib
import logging
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _numpy_kernels
from .config import numba_disabled, resolve_threads
from .dispatch import TRUSTED, KernelKind, resolve_kind, specialized
from .errors import DimensionError, DispatchError
from .hardware import host_profile, specialization_set
from .sparse import CsrMatrix, ReduceOp, Semiring

log = logging.getLogger(__name__)

try:
    from . import _numba_kernels
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba_kernels = None

__all__ = [
    "KernelKind",
    "TRUSTED",
    "specialized",
    "spmm",
    "spmm_with",
    "sddmm",
    "fusedmm",
    "backend_name",
    "set_backend",
    "use_backend",
    "row_partition",
]

_BACKENDS = {"numpy": _numpy_kernels}
if _numba_kernels is not None:
    _BACKENDS["numba"] = _numba_kernels

_backend = "numpy" if numba_disabled() or _numba_kernels is None else "numba"

_specialized_cache: dict[tuple[str, int, int], object] = {}
_specialized_lock = threading.Lock()
_combine_cache: dict[object, object] = {}
_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def backend_name() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(_BACKENDS)}")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _impl():
    return _BACKENDS[_backend]


def specialized_kernel(k: int, vlen: int | None = None):
    """Compiled fixed-K kernel for the active backend (built on first use)."""
    vlen = vlen or host_profile().vlen
    key = (_backend, int(k), int(vlen))
    with _specialized_lock:
        fn = _specialized_cache.get(key)
        if fn is None:
            fn = _impl().make_specialized(int(k), int(vlen))
            _specialized_cache[key] = fn
    return fn


def compile_specializations(dtypes=(np.float32,), ks=None) -> None:
    """Build every fixed-K kernel up front so first calls are not timed with compilation."""
    pattern = CsrMatrix(1, 1, [0, 1], [0], [1.0])
    for dtype in dtypes:
        a = pattern.astype(dtype)
        for k in sorted(ks or specialization_set()):
            spmm_with(a, np.zeros((1, k), dtype=dtype), ReduceOp.SUM, specialized(k), threads=1)


def row_partition(row_ptr: np.ndarray, parts: int) -> np.ndarray:
    """Row boundaries splitting ``row_ptr`` into ``parts`` ranges of similar nnz."""
    n_rows = row_ptr.shape[0] - 1
    parts = max(1, min(int(parts), max(n_rows, 1)))
    nnz = int(row_ptr[-1])
    if nnz == 0:
        bounds = np.linspace(0, n_rows, parts + 1).astype(np.int64)
    else:
        targets = np.linspace(0, nnz, parts + 1)
        bounds = np.searchsorted(row_ptr.astype(np.int64), targets, side="left").astype(np.int64)
    bounds[0] = 0
    bounds[-1] = n_rows
    return np.maximum.accumulate(bounds)


def _pool(threads: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(threads)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=threads, thread_name_prefix="sparsegnn")
            _pools[threads] = pool
        return pool


def _launch(fn, row_ptr, threads, *args) -> None:
    threads = resolve_threads(threads)
    bounds = row_partition(row_ptr, threads)
    ranges = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(ranges) <= 1:
        for r0, r1 in ranges:
            fn(*args, r0, r1)
        return
    futures = [_pool(threads).submit(fn, *args, r0, r1) for r0, r1 in ranges]
    for f in futures:
        f.result()


def _dense(x, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {x.shape}")
    return x


def _common_dtype(*dtypes) -> np.dtype:
    dtype = np.result_type(*dtypes)
    if dtype not in (np.float32, np.float64):
        dtype = np.dtype(np.float64) if dtype.itemsize > 4 else np.dtype(np.float32)
    return dtype


def _raw(a: CsrMatrix, dtype):
    return a.row_ptr.view(np.int64), a.col_idx, a.values.astype(dtype, copy=False)


def _prepare_spmm(a: CsrMatrix, b):
    b = _dense(b, "B")
    if a.n_cols != b.shape[0]:
        raise DimensionError(f"spmm shape mismatch: A is {a.shape}, B is {b.shape}")
    dtype = _common_dtype(a.dtype, b.dtype)
    return np.ascontiguousarray(b, dtype=dtype), dtype


def _split_reduce(reduce) -> tuple[ReduceOp, object]:
    if isinstance(reduce, Semiring):
        return reduce.reduce, reduce.combine
    return ReduceOp.parse(reduce), None


def _combine_for_backend(combine, dtype):
    """Backend module and combine callable, falling back to numpy for non-jittable callbacks."""
    impl = _impl()
    if combine is None:
        return impl, impl.multiply
    if impl is _numpy_kernels:
        return impl, combine
    jitted = _combine_cache.get(combine)
    if jitted is None:
        import numba

        jitted = combine if isinstance(combine, numba.core.dispatcher.Dispatcher) else numba.njit(combine)
        try:
            one = np.dtype(dtype).type(1)
            jitted(one, one)
        except Exception as exc:  # numba typing errors have no stable base class
            log.info("combine %r is not JIT-compatible (%s); using numpy kernels", combine, exc)
            jitted = False
        _combine_cache[combine] = jitted
    if jitted is False:
        return _numpy_kernels, combine
    return impl, jitted


def spmm(a: CsrMatrix, b, reduce=ReduceOp.SUM, *, threads: int | None = None) -> np.ndarray:
    """Sparse-dense product ``C = A (reduce) B``.

    ``reduce`` is a :class:`ReduceOp` (or its name) or a :class:`Semiring`.
    Sum with a specialised K is routed to the fixed-K kernel when tuned
    dispatch is on. Rows without nonzeros come out as zero rows.
    """
    op, combine = _split_reduce(reduce)
    if combine is not None:
        return _spmm_semiring(a, b, op, combine, threads)
    b = _dense(b, "B")
    return spmm_with(a, b, op, resolve_kind(b.shape[1], op), threads=threads)


def spmm_with(a: CsrMatrix, b, reduce, kind: KernelKind, *, threads: int | None = None) -> np.ndarray:
    """SpMM on an explicitly chosen kernel."""
    op = ReduceOp.parse(reduce)
    b, dtype = _prepare_spmm(a, b)
    k = b.shape[1]
    if not kind.is_trusted:
        if op is not ReduceOp.SUM:
            raise DispatchError(f"{kind} supports only sum reduction, got {op.value}")
        if kind.k != k:
            raise DispatchError(f"{kind} requested for B with {k} columns")
        if kind.k not in specialization_set():
            raise DispatchError(f"no specialised kernel for K={kind.k}; available: {sorted(specialization_set())}")
    out = np.zeros((a.n_rows, k), dtype=dtype)
    if a.nnz == 0 or k == 0:
        return out
    row_ptr, col_idx, values = _raw(a, dtype)
    if kind.is_trusted:
        _launch(_impl().spmm_trusted, row_ptr, threads, row_ptr, col_idx, values, b, out, op.code)
    else:
        _launch(specialized_kernel(k), row_ptr, threads, row_ptr, col_idx, values, b, out)
    return out


def _spmm_semiring(a, b, op, combine, threads):
    b, dtype = _prepare_spmm(a, b)
    out = np.zeros((a.n_rows, b.shape[1]), dtype=dtype)
    if a.nnz == 0 or b.shape[1] == 0:
        return out
    impl, fn = _combine_for_backend(combine, dtype)
    row_ptr, col_idx, values = _raw(a, dtype)
    _launch(impl.spmm_combine, row_ptr, threads, row_ptr, col_idx, values, b, out, op.code, fn)
    return out


def _prepare_sampled(p: CsrMatrix, x, y):
    x = _dense(x, "X")
    y = _dense(y, "Y")
    if p.n_rows != x.shape[0] or p.n_cols != y.shape[0] or x.shape[1] != y.shape[1]:
        raise DimensionError(f"shape mismatch: P is {p.shape}, X is {x.shape}, Y is {y.shape}")
    dtype = _common_dtype(p.dtype, x.dtype, y.dtype)
    return np.ascontiguousarray(x, dtype=dtype), np.ascontiguousarray(y, dtype=dtype), dtype


def sddmm(p: CsrMatrix, x, y, *, threads: int | None = None) -> CsrMatrix:
    """Values ``P[i,j] * dot(X[i], Y[j])`` on the pattern of ``P``."""
    x, y, dtype = _prepare_sampled(p, x, y)
    out_values = np.zeros(p.nnz, dtype=dtype)
    if p.nnz:
        row_ptr, col_idx, values = _raw(p, dtype)
        _launch(_impl().sddmm, row_ptr, threads, row_ptr, col_idx, values, x, y, out_values, dtype.type(0))
    return CsrMatrix(p.n_rows, p.n_cols, p.row_ptr, p.col_idx, out_values, _checked=True)


def fusedmm(p: CsrMatrix, x, y, sr: Semiring | None = None, *, threads: int | None = None) -> np.ndarray:
    """Single-pass ``spmm(sddmm(P, X, Y), Y, reduce)``.

    The per-edge scalar is ``sr.combine(P[i,j], dot(X[i], Y[j]))``
    (multiplication by default); the sampled matrix is never built.
    """
    sr = sr or Semiring()
    x, y, dtype = _prepare_sampled(p, x, y)
    out = np.zeros((p.n_rows, y.shape[1]), dtype=dtype)
    if p.nnz == 0 or y.shape[1] == 0:
        return out
    impl, fn = _combine_for_backend(sr.combine, dtype)
    row_ptr, col_idx, values = _raw(p, dtype)
    _launch(impl.fusedmm, row_ptr, threads, row_ptr, col_idx, values, x, y, out, sr.reduce.code, fn, dtype.type(0))
    return out
