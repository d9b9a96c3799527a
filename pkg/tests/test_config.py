import os
import subprocess
import sys

import pytest

from sparsegnn import kernels
from sparsegnn.config import numba_disabled, resolve_threads


def test_thread_precedence(monkeypatch):
    monkeypatch.setenv("SPARSEGNN_THREADS", "3")
    assert resolve_threads(5) == 5
    assert resolve_threads() == 3
    monkeypatch.delenv("SPARSEGNN_THREADS")
    assert resolve_threads() == (os.cpu_count() or 1)
    with pytest.raises(ValueError):
        resolve_threads(0)


@pytest.mark.parametrize("value, disabled", [("1", True), ("yes", True), ("0", False), ("", False), ("false", False)])
def test_disable_flag_parsing(monkeypatch, value, disabled):
    monkeypatch.setenv("SPARSEGNN_DISABLE_NUMBA", value)
    assert numba_disabled() is disabled


@pytest.mark.parametrize("value, backend", [("1", "numpy"), ("0", "numba")])
def test_flag_selects_backend(value, backend):
    env = dict(os.environ, SPARSEGNN_DISABLE_NUMBA=value)
    code = "from sparsegnn import kernels; print(kernels.backend_name())"
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert proc.stdout.strip() == backend


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")
    with kernels.use_backend("numpy"):
        assert kernels.backend_name() == "numpy"
    assert kernels.backend_name() != "fortran"
