"""CSR matrices, reduction semantics and graph utilities.

Dense operands are plain C-contiguous 2-D numpy arrays; only the sparse
operand gets its own type.
"""

from __future__ import annotations

import enum
import operator
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import CsrError, DimensionError

INDEX_DTYPE = np.uint32
OFFSET_DTYPE = np.uint64
DEFAULT_DTYPE = np.float32
_MAX_DIM = 2**32


class ReduceOp(enum.Enum):
    SUM = "sum"
    MIN = "min"
    MAX = "max"
    MEAN = "mean"

    @classmethod
    def parse(cls, value) -> "ReduceOp":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(op.value for op in cls)
            raise ValueError(f"unknown reduction {value!r}; expected one of {names}") from None

    @property
    def code(self) -> int:
        return _REDUCE_CODES[self]


_REDUCE_CODES = {ReduceOp.SUM: 0, ReduceOp.MIN: 1, ReduceOp.MAX: 2, ReduceOp.MEAN: 3}


@dataclass(frozen=True)
class Semiring:
    """A (combine, reduce) pair.

    ``combine(edge_value, dense_value)`` maps one scalar pair to a scalar.
    ``None`` means plain multiplication, which keeps the fast kernels.
    """

    combine: Callable[[float, float], float] | None = None
    reduce: ReduceOp = ReduceOp.SUM

    def __post_init__(self):
        object.__setattr__(self, "reduce", ReduceOp.parse(self.reduce))
        if self.combine is operator.mul:
            object.__setattr__(self, "combine", None)

    @property
    def is_default_combine(self) -> bool:
        return self.combine is None


def _readonly(a: np.ndarray) -> np.ndarray:
    view = a.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix.

    Column indices are unsigned 32-bit and sorted strictly increasing within
    each row; row offsets are unsigned 64-bit. Arrays are read-only.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "row_ptr", _readonly(np.ascontiguousarray(self.row_ptr, dtype=OFFSET_DTYPE)))
        object.__setattr__(self, "col_idx", _readonly(np.ascontiguousarray(self.col_idx, dtype=INDEX_DTYPE)))
        values = np.asarray(self.values)
        if values.dtype not in (np.float32, np.float64):
            values = values.astype(DEFAULT_DTYPE)
        object.__setattr__(self, "values", _readonly(np.ascontiguousarray(values)))
        if not self._checked:
            self.validate()

    def validate(self) -> None:
        """Raise :class:`CsrError` unless every CSR invariant holds."""
        n, m = self.n_rows, self.n_cols
        if n < 0 or m < 0:
            raise CsrError(f"negative shape ({n}, {m})")
        if n >= _MAX_DIM or m >= _MAX_DIM:
            raise CsrError(f"shape ({n}, {m}) exceeds 32-bit index range")
        rp, ci = self.row_ptr, self.col_idx
        if rp.ndim != 1 or rp.shape[0] != n + 1:
            raise CsrError(f"row_ptr has length {rp.shape[0]}, expected {n + 1}")
        if rp[0] != 0:
            raise CsrError(f"row_ptr[0] = {rp[0]}, expected 0")
        nnz = int(rp[-1])
        if ci.shape != (nnz,) or self.values.shape != (nnz,):
            raise CsrError(
                f"row_ptr[-1] = {nnz} but col_idx has {ci.shape[0]} and values {self.values.shape[0]} entries"
            )
        steps = np.diff(rp.astype(np.int64))
        if np.any(steps < 0):
            raise CsrError(f"row_ptr decreases at row {int(np.argmax(steps < 0))}")
        if nnz and int(ci.max()) >= m:
            k = int(np.argmax(ci >= m))
            raise CsrError(f"column index {int(ci[k])} at position {k} out of range for {m} columns")
        if nnz > 1:
            # a row boundary falls between k and k+1 iff k+1 is some row start
            increasing = np.diff(ci.astype(np.int64)) > 0
            boundary = np.zeros(nnz - 1, dtype=bool)
            starts = rp[1:-1].astype(np.int64)
            starts = starts[(starts > 0) & (starts < nnz)]
            boundary[starts - 1] = True
            bad = ~(increasing | boundary)
            if bad.any():
                k = int(np.argmax(bad)) + 1
                row = int(np.searchsorted(rp, k, side="right")) - 1
                raise CsrError(f"row {row}: column indices not strictly increasing at position {k}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr.astype(np.int64)))

    def astype(self, dtype) -> "CsrMatrix":
        dtype = np.dtype(dtype)
        if dtype == self.dtype:
            return self
        return CsrMatrix(self.n_rows, self.n_cols, self.row_ptr, self.col_idx, self.values.astype(dtype), _checked=True)

    def with_values(self, values: np.ndarray) -> "CsrMatrix":
        """Same pattern, new values."""
        values = np.asarray(values)
        if values.shape != (self.nnz,):
            raise CsrError(f"expected {self.nnz} values, got shape {values.shape}")
        return CsrMatrix(self.n_rows, self.n_cols, self.row_ptr, self.col_idx, values, _checked=True)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=self.dtype)
        out[self.row_ids(), self.col_idx.astype(np.int64)] = self.values
        return out

    @classmethod
    def from_dense(cls, dense) -> "CsrMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2:
            raise DimensionError(f"expected a 2-D array, got shape {dense.shape}")
        rows, cols = np.nonzero(dense)
        counts = np.bincount(rows, minlength=dense.shape[0])
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(dense.shape[0], dense.shape[1], row_ptr, cols, dense[rows, cols])

    def __eq__(self, other) -> bool:
        """Bitwise equality of shape, pattern and values."""
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.dtype == other.dtype
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and self.values.tobytes() == other.values.tobytes()
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz}, dtype={self.dtype})"


def csr_from_arrays(n_rows: int, n_cols: int, rows, cols, vals, dtype=None) -> CsrMatrix:
    """Build CSR from parallel COO arrays, summing duplicates in input order."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=dtype or DEFAULT_DTYPE).ravel()
    if not (rows.shape == cols.shape == vals.shape):
        raise CsrError(f"COO arrays differ in length: {rows.shape[0]}, {cols.shape[0]}, {vals.shape[0]}")
    if n_rows < 0 or n_cols < 0:
        raise CsrError(f"negative shape ({n_rows}, {n_cols})")
    bad = (rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols)
    if bad.any():
        k = int(np.argmax(bad))
        raise CsrError(
            f"triple #{k} ({int(rows[k])}, {int(cols[k])}, {float(vals[k])!r}) out of range for shape ({n_rows}, {n_cols})"
        )
    order = np.lexsort((cols, rows))  # stable: duplicates keep input order
    r, c, v = rows[order], cols[order], vals[order]
    if r.size:
        first = np.ones(r.size, dtype=bool)
        first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        group = np.cumsum(first) - 1
        summed = np.zeros(int(group[-1]) + 1, dtype=vals.dtype)
        np.add.at(summed, group, v)  # unbuffered, sequential per group
        r, c, v = r[first], c[first], summed
    counts = np.bincount(r, minlength=n_rows) if n_rows else np.zeros(0, dtype=np.int64)
    row_ptr = np.zeros(n_rows + 1, dtype=OFFSET_DTYPE)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(n_rows, n_cols, row_ptr, c, v, _checked=True)


def csr_from_coo(n_rows: int, n_cols: int, triples: Iterable[tuple[int, int, float]], dtype=None) -> CsrMatrix:
    """Build a CSR matrix from ``(row, col, value)`` triples; duplicates are summed."""
    triples = list(triples)
    if not triples:
        return csr_from_arrays(n_rows, n_cols, [], [], [], dtype)
    rows, cols, vals = zip(*triples)
    return csr_from_arrays(n_rows, n_cols, rows, cols, vals, dtype)


def identity(n: int, dtype=None) -> CsrMatrix:
    if n < 0:
        raise CsrError(f"identity size must be >= 0, got {n}")
    idx = np.arange(n)
    return CsrMatrix(n, n, np.arange(n + 1), idx, np.ones(n, dtype=dtype or DEFAULT_DTYPE), _checked=True)


def transpose(a: CsrMatrix) -> CsrMatrix:
    order = np.argsort(a.col_idx, kind="stable")  # keeps source rows ascending
    counts = np.bincount(a.col_idx.astype(np.int64), minlength=a.n_cols)
    row_ptr = np.zeros(a.n_cols + 1, dtype=OFFSET_DTYPE)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(a.n_cols, a.n_rows, row_ptr, a.row_ids()[order], a.values[order], _checked=True)


def row_degrees(a: CsrMatrix) -> np.ndarray:
    return np.diff(a.row_ptr).astype(np.int64)


def is_symmetric(a: CsrMatrix) -> bool:
    """Exact structural and value symmetry, without building the transpose."""
    if a.n_rows != a.n_cols:
        return False
    rows = a.row_ids()
    cols = a.col_idx.astype(np.int64)
    order = np.lexsort((rows, cols))
    return bool(
        np.array_equal(cols[order], rows)
        and np.array_equal(rows[order], cols)
        and a.values[order].tobytes() == a.values.tobytes()
    )


def with_self_loops(a: CsrMatrix, weight: float = 1.0) -> CsrMatrix:
    if a.n_rows != a.n_cols:
        raise DimensionError(f"self loops need a square matrix, got {a.shape}")
    n = a.n_rows
    rows = np.concatenate([a.row_ids(), np.arange(n)])
    cols = np.concatenate([a.col_idx.astype(np.int64), np.arange(n)])
    vals = np.concatenate([a.values, np.full(n, weight, dtype=a.dtype)])
    return csr_from_arrays(n, n, rows, cols, vals, a.dtype)


def normalize_adjacency(a: CsrMatrix, add_self_loops: bool = True) -> CsrMatrix:
    """Symmetric normalisation D^-1/2 (A [+ I]) D^-1/2.

    Degrees are row sums of the (self-looped) matrix; zero-degree rows stay
    zero. Values must be nonnegative.
    """
    if a.n_rows != a.n_cols:
        raise DimensionError(f"normalize_adjacency needs a square matrix, got {a.shape}")
    if a.nnz and float(a.values.min()) < 0:
        raise CsrError("normalize_adjacency needs nonnegative values")
    at = with_self_loops(a) if add_self_loops else a
    rows = at.row_ids()
    cols = at.col_idx.astype(np.int64)
    deg = np.bincount(rows, weights=at.values.astype(np.float64), minlength=at.n_rows)
    denom = np.sqrt(deg[rows] * deg[cols])
    vals = np.zeros(at.nnz, dtype=np.float64)
    np.divide(at.values, denom, out=vals, where=denom > 0)
    return at.with_values(vals.astype(a.dtype))


def scale_rows(a: CsrMatrix, factors) -> CsrMatrix:
    """Multiply row i of ``a`` by ``factors[i]``."""
    factors = np.asarray(factors, dtype=a.dtype)
    if factors.shape != (a.n_rows,):
        raise DimensionError(f"need {a.n_rows} row factors, got shape {factors.shape}")
    return a.with_values(a.values * factors[a.row_ids()])
