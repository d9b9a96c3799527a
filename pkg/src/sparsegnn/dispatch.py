"""Process-wide switch between tuned and trusted SpMM kernels."""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass

from .hardware import specialization_set
from .sparse import ReduceOp


@dataclass(frozen=True)
class KernelKind:
    """Which SpMM kernel runs: ``k=None`` is the trusted kernel."""

    k: int | None = None

    @property
    def is_trusted(self) -> bool:
        return self.k is None

    def __str__(self) -> str:
        return "trusted" if self.k is None else f"specialized(K={self.k})"


TRUSTED = KernelKind()


def specialized(k: int) -> KernelKind:
    return KernelKind(int(k))


@dataclass(frozen=True)
class DispatchState:
    tuned_enabled: bool
    specialization_set: frozenset[int]


_lock = threading.Lock()
_tuned = True


def set_dispatch(enabled: bool) -> DispatchState:
    """Turn tuned-kernel routing on or off; returns the new state."""
    global _tuned
    with _lock:
        _tuned = bool(enabled)
        return DispatchState(_tuned, specialization_set())


def get_dispatch() -> DispatchState:
    with _lock:
        return DispatchState(_tuned, specialization_set())


def patch() -> DispatchState:
    return set_dispatch(True)


def unpatch() -> DispatchState:
    return set_dispatch(False)


@contextlib.contextmanager
def tuned(enabled: bool):
    """Temporarily set the dispatch flag."""
    global _tuned
    with _lock:
        previous = _tuned
        _tuned = bool(enabled)
    try:
        yield
    finally:
        with _lock:
            _tuned = previous


def resolve_kind(k: int, reduce=ReduceOp.SUM):
    """Kernel that a plain ``spmm`` call with ``k`` columns will run."""
    state = get_dispatch()
    if state.tuned_enabled and ReduceOp.parse(reduce) is ReduceOp.SUM and k in state.specialization_set:
        return specialized(k)
    return TRUSTED
