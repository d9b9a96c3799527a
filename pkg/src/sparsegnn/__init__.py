"""Auto-tuned sparse kernels and cache-enabled GNN training on CSR graphs."""

from .dispatch import DispatchState, KernelKind, TRUSTED, get_dispatch, patch, set_dispatch, specialized, unpatch
from .errors import ConfigError, CsrError, DimensionError, DispatchError, ParseError, SparseGnnError, TapeError
from .hardware import SWEEP_KS, HardwareProfile, detect_hardware
from .kernels import fusedmm, sddmm, spmm, spmm_with
from .sparse import (
    CsrMatrix,
    ReduceOp,
    Semiring,
    csr_from_arrays,
    csr_from_coo,
    identity,
    is_symmetric,
    normalize_adjacency,
    row_degrees,
    transpose,
)

__version__ = "0.1.0"
