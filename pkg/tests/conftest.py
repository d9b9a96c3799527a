import time

import numpy as np
import pytest

from sparsegnn import kernels
from sparsegnn.dispatch import set_dispatch


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and kernels._numba_kernels is None:
        pytest.skip("numba unavailable")
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture(autouse=True)
def _dispatch_on():
    set_dispatch(True)
    yield
    set_dispatch(True)


ACCEPTANCE = pytest.StashKey[list]()


class Criterion:
    """Collects checks for one acceptance criterion and emits a single verdict line."""

    def __init__(self, number, title, sink, limit_s=None):
        self.number, self.title, self.sink, self.limit_s = number, title, sink, limit_s
        self.results, self.details = [], []

    def check(self, ok, detail):
        self.results.append(bool(ok))
        self.details.append(detail)
        return ok

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is None and self.limit_s is not None:
            self.check(elapsed < self.limit_s, f"runtime {elapsed:.1f}s (<{self.limit_s}s)")
        ok = exc_type is None and bool(self.results) and all(self.results)
        detail = "; ".join(self.details) if exc_type is None else f"{exc_type.__name__}: {exc}"
        line = f"criterion {self.number}: {'PASS' if ok else 'FAIL'}  {self.title}  [{detail}] ({elapsed:.1f}s)"
        self.sink.append(line)
        print(line)
        if exc_type is None and not ok:
            raise AssertionError(line)
        return False


@pytest.fixture
def criterion(request):
    sink = request.config.stash.setdefault(ACCEPTANCE, [])
    return lambda number, title, limit_s=None: Criterion(number, title, sink, limit_s)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
