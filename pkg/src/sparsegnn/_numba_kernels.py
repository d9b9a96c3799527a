"""JIT-compiled row-range kernels.

Every kernel works on a half-open row range ``[r0, r1)`` and writes only
those output rows, so the scheduler can hand disjoint ranges to threads.
``row_ptr`` arrives as an int64 view; column indices stay uint32.
"""

import numba as nb
import numpy as np

SUM, MIN, MAX, MEAN = 0, 1, 2, 3

_jit = nb.njit(nogil=True, cache=True)


@_jit
def multiply(a, b):
    return a * b


@_jit
def spmm_trusted(row_ptr, col_idx, values, b, out, reduce, r0, r1):
    k = b.shape[1]
    for i in range(r0, r1):
        start = row_ptr[i]
        end = row_ptr[i + 1]
        if start == end:
            continue
        if reduce == SUM or reduce == MEAN:
            for p in range(start, end):
                a = values[p]
                j = col_idx[p]
                for c in range(k):
                    out[i, c] += a * b[j, c]
            if reduce == MEAN:
                deg = end - start
                for c in range(k):
                    out[i, c] = out[i, c] / deg
        else:
            a = values[start]
            j = col_idx[start]
            for c in range(k):
                out[i, c] = a * b[j, c]
            for p in range(start + 1, end):
                a = values[p]
                j = col_idx[p]
                for c in range(k):
                    v = a * b[j, c]
                    if reduce == MIN:
                        if v < out[i, c]:
                            out[i, c] = v
                    elif v > out[i, c]:
                        out[i, c] = v


@nb.njit(nogil=True)
def spmm_combine(row_ptr, col_idx, values, b, out, reduce, combine, r0, r1):
    k = b.shape[1]
    for i in range(r0, r1):
        start = row_ptr[i]
        end = row_ptr[i + 1]
        if start == end:
            continue
        for p in range(start, end):
            a = values[p]
            j = col_idx[p]
            for c in range(k):
                v = combine(a, b[j, c])
                if reduce == SUM or reduce == MEAN:
                    out[i, c] += v
                elif p == start:
                    out[i, c] = v
                elif reduce == MIN:
                    if v < out[i, c]:
                        out[i, c] = v
                elif v > out[i, c]:
                    out[i, c] = v
        if reduce == MEAN:
            deg = end - start
            for c in range(k):
                out[i, c] = out[i, c] / deg


@_jit
def sddmm(row_ptr, col_idx, values, x, y, out_values, zero, r0, r1):
    k = x.shape[1]
    for i in range(r0, r1):
        for p in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[p]
            dot = zero
            for c in range(k):
                dot += x[i, c] * y[j, c]
            out_values[p] = values[p] * dot


@nb.njit(nogil=True)
def fusedmm(row_ptr, col_idx, values, x, y, out, reduce, combine, zero, r0, r1):
    k = x.shape[1]
    kout = y.shape[1]
    for i in range(r0, r1):
        start = row_ptr[i]
        end = row_ptr[i + 1]
        if start == end:
            continue
        for p in range(start, end):
            j = col_idx[p]
            dot = zero
            for c in range(k):
                dot += x[i, c] * y[j, c]
            s = combine(values[p], dot)
            for c in range(kout):
                v = s * y[j, c]
                if reduce == SUM or reduce == MEAN:
                    out[i, c] += v
                elif p == start:
                    out[i, c] = v
                elif reduce == MIN:
                    if v < out[i, c]:
                        out[i, c] = v
                elif v > out[i, c]:
                    out[i, c] = v
        if reduce == MEAN:
            deg = end - start
            for c in range(kout):
                out[i, c] = out[i, c] / deg


def make_specialized(k: int, vlen: int):
    """Compile the fixed-K Sum kernel.

    K is a compile-time constant, so LLVM vectorises the column loop at the
    target width (``vlen`` only decides which K values get a kernel). Each
    output row is loaded once per four nonzeros and updated in registers.
    The adds are grouped left to right in nonzero order, matching
    :func:`spmm_trusted` bit for bit.
    """
    if k % vlen:
        raise ValueError(f"K={k} is not a multiple of the vector length {vlen}")

    @nb.njit(nogil=True)
    def spmm_fixed_k(row_ptr, col_idx, values, b, out, r0, r1):
        for i in range(r0, r1):
            end = row_ptr[i + 1]
            p = row_ptr[i]
            while p + 4 <= end:
                a0 = values[p]
                a1 = values[p + 1]
                a2 = values[p + 2]
                a3 = values[p + 3]
                j0 = col_idx[p]
                j1 = col_idx[p + 1]
                j2 = col_idx[p + 2]
                j3 = col_idx[p + 3]
                for c in range(k):
                    out[i, c] = (((out[i, c] + a0 * b[j0, c]) + a1 * b[j1, c]) + a2 * b[j2, c]) + a3 * b[j3, c]
                p += 4
            while p < end:
                a0 = values[p]
                j0 = col_idx[p]
                for c in range(k):
                    out[i, c] += a0 * b[j0, c]
                p += 1

    return spmm_fixed_k
