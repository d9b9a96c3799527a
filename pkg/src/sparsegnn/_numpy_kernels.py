"""Pure-numpy row-range kernels, used when numba is disabled or missing.

Rows are visited by nonzero position: step ``t`` handles the ``t``-th
stored entry of every row that has one. Rows are sorted by descending
degree so each step's active rows form a prefix. Every output element
still accumulates its products in nonzero order, which keeps Sum results
identical to the sequential JIT kernels.
"""

import numpy as np

SUM, MIN, MAX, MEAN = 0, 1, 2, 3


def multiply(a, b):
    return a * b


def _by_degree(row_ptr, r0, r1):
    deg = row_ptr[r0 + 1 : r1 + 1] - row_ptr[r0:r1]
    order = np.argsort(-deg, kind="stable")
    degs = deg[order]
    rows = order + r0
    maxdeg = int(degs[0]) if degs.size else 0
    # active[t] = number of rows with more than t nonzeros
    active = np.searchsorted(-degs, -np.arange(maxdeg), side="left")
    return rows, degs, active


def _vectorize(combine, dtype):
    if combine is multiply:
        return np.multiply
    return np.vectorize(combine, otypes=[dtype])


def _reduce_rows(row_ptr, col_idx, edge_values, b, out, reduce, combine, r0, r1):
    rows, degs, active = _by_degree(row_ptr, r0, r1)
    starts = row_ptr[rows]
    fn = _vectorize(combine, out.dtype)
    for t, m in enumerate(active):
        sel = rows[:m]
        p = starts[:m] + t
        msg = fn(edge_values[p][:, None], b[col_idx[p]]).astype(out.dtype, copy=False)
        if reduce == SUM or reduce == MEAN:
            out[sel] = out[sel] + msg
        elif t == 0:
            out[sel] = msg
        elif reduce == MIN:
            out[sel] = np.minimum(out[sel], msg)
        else:
            out[sel] = np.maximum(out[sel], msg)
    if reduce == MEAN:
        nz = degs > 0
        out[rows[nz]] = out[rows[nz]] / degs[nz][:, None]


def spmm_trusted(row_ptr, col_idx, values, b, out, reduce, r0, r1):
    _reduce_rows(row_ptr, col_idx, values, b, out, reduce, multiply, r0, r1)


def spmm_combine(row_ptr, col_idx, values, b, out, reduce, combine, r0, r1):
    _reduce_rows(row_ptr, col_idx, values, b, out, reduce, combine, r0, r1)


def make_specialized(k: int, vlen: int):
    """Fixed-K Sum kernel: each gathered output block absorbs four positions."""
    if k % vlen:
        raise ValueError(f"K={k} is not a multiple of the vector length {vlen}")

    def spmm_fixed_k(row_ptr, col_idx, values, b, out, r0, r1):
        if b.shape[1] != k:
            raise ValueError(f"kernel built for K={k}, got {b.shape[1]} columns")
        rows, _, active = _by_degree(row_ptr, r0, r1)
        starts = row_ptr[rows]
        for t0 in range(0, active.size, 4):
            m0 = active[t0]
            sel = rows[:m0]
            block = out[sel]
            for t in range(t0, min(t0 + 4, active.size)):
                m = active[t]
                p = starts[:m] + t
                block[:m] += values[p][:, None] * b[col_idx[p]]
            out[sel] = block

    return spmm_fixed_k


def _row_dots(row_ptr, col_idx, x, y, r0, r1):
    lo, hi = row_ptr[r0], row_ptr[r1]
    rows = np.repeat(np.arange(r0, r1), row_ptr[r0 + 1 : r1 + 1] - row_ptr[r0:r1])
    xs, ys = x[rows], y[col_idx[lo:hi]]
    # column by column from zero, the same summation order as the compiled loop
    dots = np.zeros(hi - lo, dtype=x.dtype)
    for c in range(x.shape[1]):
        dots += xs[:, c] * ys[:, c]
    return dots


def sddmm(row_ptr, col_idx, values, x, y, out_values, zero, r0, r1):
    lo, hi = row_ptr[r0], row_ptr[r1]
    out_values[lo:hi] = values[lo:hi] * _row_dots(row_ptr, col_idx, x, y, r0, r1)


def fusedmm(row_ptr, col_idx, values, x, y, out, reduce, combine, zero, r0, r1):
    lo, hi = row_ptr[r0], row_ptr[r1]
    dots = _row_dots(row_ptr, col_idx, x, y, r0, r1)
    edge = np.empty(row_ptr[-1], dtype=out.dtype)
    edge[lo:hi] = _vectorize(combine, out.dtype)(values[lo:hi], dots)
    _reduce_rows(row_ptr, col_idx, edge, y, out, reduce, multiply, r0, r1)
