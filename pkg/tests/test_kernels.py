import numpy as np
import pytest

from sparsegnn import DimensionError, DispatchError, kernels
from sparsegnn.dispatch import TRUSTED, specialized
from sparsegnn.hardware import specialization_set
from sparsegnn.kernels import fusedmm, row_partition, sddmm, spmm, spmm_with
from sparsegnn.sparse import ReduceOp, Semiring, csr_from_coo, identity
from sparsegnn.verify import brute_reduce, dense_oracle, random_csr, scaled_error

B22 = np.array([[1, 2], [3, 4]], np.float32)


def test_identity_law(backend):
    np.testing.assert_array_equal(spmm(identity(2), B22), B22)


def test_small_product(backend):
    a = csr_from_coo(2, 2, [(0, 1, 2.0), (1, 0, 3.0)])
    assert spmm(a, np.array([[1, 1], [2, 2]], np.float32)).tolist() == [[4, 4], [3, 3]]


@pytest.mark.parametrize("op, want", [("min", [[2, 2]]), ("max", [[4, 8]]), ("mean", [[3, 5]]), ("sum", [[6, 10]])])
def test_reductions(backend, op, want):
    a = csr_from_coo(1, 2, [(0, 0, 1.0), (0, 1, 1.0)])
    assert spmm(a, np.array([[2, 8], [4, 2]], np.float32), op).tolist() == want


@pytest.mark.parametrize("op", list(ReduceOp))
def test_empty_rows_are_zero(backend, op):
    a = csr_from_coo(3, 2, [(1, 0, -1.0)])
    out = spmm(a, np.array([[5.0, -7.0], [1.0, 1.0]], np.float32), op)
    assert out[0].tolist() == [0, 0] and out[2].tolist() == [0, 0]


def test_min_max_do_not_start_from_infinity(backend):
    a = csr_from_coo(1, 2, [(0, 0, 1.0), (0, 1, 1.0)])
    b = np.array([[-3.0], [-1.0]], np.float32)
    assert spmm(a, b, "max").tolist() == [[-1.0]]
    assert spmm(a, b * -1, "min").tolist() == [[1.0]]


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 2\).*\(3, 1\)"):
        spmm(identity(2), np.ones((3, 1), np.float32))


def test_output_dtype_follows_inputs():
    assert spmm(identity(2), B22).dtype == np.float32
    assert spmm(identity(2, np.float64), B22).dtype == np.float64


def test_oracle_random(backend, rng):
    for _ in range(10):
        n, m, k = rng.integers(1, 80, size=3)
        a = random_csr(rng, int(n), int(m), 0.1)
        b = rng.standard_normal((int(m), int(k))).astype(np.float32)
        assert scaled_error(spmm(a, b), a, b) <= 1e-4
        a64, b64 = a.astype(np.float64), b.astype(np.float64)
        assert scaled_error(spmm(a64, b64), a, b) <= 1e-10
        for op in (ReduceOp.MIN, ReduceOp.MAX):
            np.testing.assert_array_equal(spmm(a, b, op), brute_reduce(a, b, op))


def test_trusted_equals_spmm(backend, rng):
    a = random_csr(rng, 60, 40, 0.1)
    b = rng.standard_normal((40, 32)).astype(np.float32)
    assert spmm_with(a, b, "sum", TRUSTED).tobytes() == spmm(a, b).tobytes()


@pytest.mark.parametrize("k", [16, 32, 64])
def test_specialized_bitwise(backend, rng, k):
    if k not in specialization_set():
        pytest.skip(f"K={k} not specialised on this host")
    a = random_csr(rng, 100, 100, 0.05)
    b = rng.standard_normal((100, k)).astype(np.float32)
    ref = spmm_with(a, b, "sum", TRUSTED)
    assert spmm_with(a, b, "sum", specialized(k)).tobytes() == ref.tobytes()
    assert scaled_error(ref, a, b) <= 1e-4


def test_specialized_keeps_signed_zero(backend):
    a = csr_from_coo(1, 1, [(0, 0, -1.0)])
    k = min(specialization_set())
    b = np.zeros((1, k), np.float32)
    ref = spmm_with(a, b, "sum", TRUSTED)
    assert spmm_with(a, b, "sum", specialized(k)).tobytes() == ref.tobytes()


def test_specialized_contract():
    k = min(specialization_set())
    a = identity(48)
    with pytest.raises(DispatchError, match="48"):
        spmm_with(a, np.ones((48, 48), np.float32), "sum", specialized(32))
    with pytest.raises(DispatchError, match="sum"):
        spmm_with(identity(k), np.ones((k, k), np.float32), "max", specialized(k))
    with pytest.raises(DispatchError):
        spmm_with(identity(48), np.ones((48, 48), np.float32), "sum", specialized(48))


def test_backends_agree(rng):
    a = random_csr(rng, 90, 70, 0.08)
    b = rng.standard_normal((70, 33)).astype(np.float32)
    for op in ReduceOp:
        with kernels.use_backend("numpy"):
            slow = spmm(a, b, op)
        with kernels.use_backend("numba"):
            fast = spmm(a, b, op)
        np.testing.assert_array_equal(fast, slow)


def test_backends_agree_on_sampled_kernels(rng):
    p = random_csr(rng, 60, 50, 0.1)
    x = rng.standard_normal((60, 19)).astype(np.float32)
    y = rng.standard_normal((50, 19)).astype(np.float32)
    results = {}
    for name in ("numpy", "numba"):
        with kernels.use_backend(name):
            results[name] = [sddmm(p, x, y).values.tobytes()] + [
                fusedmm(p, x, y, Semiring(reduce=op)).tobytes() for op in ReduceOp
            ]
    assert results["numpy"] == results["numba"]


def test_thread_counts_bitwise(backend, rng):
    a = random_csr(rng, 200, 200, 0.05)
    b = rng.standard_normal((200, 24)).astype(np.float32)
    ref = spmm(a, b, threads=1)
    for t in (2, 4, 8):
        assert spmm(a, b, threads=t).tobytes() == ref.tobytes()


def test_row_partition_balances_nonzeros():
    row_ptr = np.array([0, 100, 101, 102, 103, 203], np.uint64)
    # 203 nonzeros: the split lands where the prefix first reaches 101.5
    assert row_partition(row_ptr, 2).tolist() == [0, 3, 5]
    assert row_partition(np.arange(9, dtype=np.uint64), 4).tolist() == [0, 2, 4, 6, 8]
    assert row_partition(np.array([0], np.uint64), 4).tolist() == [0, 0]


def test_combine_hook(backend):
    a = csr_from_coo(1, 2, [(0, 0, 1.0), (0, 1, 2.0)])
    b = np.array([[1.0, 5.0], [3.0, 4.0]], np.float32)
    add = Semiring(lambda e, x: e + x, ReduceOp.MAX)
    assert spmm(a, b, add).tolist() == [[5.0, 6.0]]
    assert spmm(a, b, Semiring(lambda e, x: e + x)).tolist() == [[7.0, 12.0]]


def test_sddmm_examples(backend, rng):
    out = sddmm(identity(2), B22, B22)
    assert out.values.tolist() == [5, 25]
    assert out.col_idx.tolist() == [0, 1]
    x = rng.standard_normal((3, 4)).astype(np.float32)
    y = rng.standard_normal((5, 4)).astype(np.float32)
    full = csr_from_coo(3, 5, [(i, j, 1.0) for i in range(3) for j in range(5)])
    np.testing.assert_allclose(sddmm(full, x, y).to_dense(), x @ y.T, rtol=1e-5, atol=1e-6)
    empty = sddmm(csr_from_coo(3, 5, []), x, y)
    assert empty.nnz == 0 and empty.shape == (3, 5)


def test_sddmm_shape_errors():
    with pytest.raises(DimensionError):
        sddmm(identity(2), np.ones((2, 3)), np.ones((2, 4)))
    with pytest.raises(DimensionError):
        sddmm(identity(2), np.ones((3, 3)), np.ones((2, 3)))


@pytest.mark.parametrize("op", list(ReduceOp))
def test_fusedmm_is_composition(backend, rng, op):
    for dtype, tol in ((np.float32, 1e-5), (np.float64, 1e-12)):
        p = random_csr(rng, 40, 30, 0.15, dtype)
        x = rng.standard_normal((40, 8)).astype(dtype)
        y = rng.standard_normal((30, 8)).astype(dtype)
        want = spmm(sddmm(p, x, y), y, op)
        np.testing.assert_allclose(fusedmm(p, x, y, Semiring(reduce=op)), want, rtol=tol, atol=tol)


def test_fusedmm_closed_forms(backend, rng):
    x = rng.standard_normal((6, 5))
    got = fusedmm(identity(6, np.float64), x, x)
    np.testing.assert_allclose(got, np.sum(x * x, axis=1, keepdims=True) * x, rtol=1e-12)
    zero = fusedmm(csr_from_coo(6, 6, []), x, x)
    assert zero.shape == (6, 5) and not zero.any()


def test_fusedmm_combine(backend, rng):
    p = random_csr(rng, 12, 12, 0.3, np.float64)
    x = rng.standard_normal((12, 3))
    sig = Semiring(lambda e, d: e / (1.0 + np.exp(-d)))
    dots = x @ x.T
    dense = p.to_dense()
    edge = np.where(dense != 0, dense / (1 + np.exp(-dots)), 0.0)
    np.testing.assert_allclose(fusedmm(p, x, x, sig), edge @ x, rtol=1e-12, atol=1e-12)


def test_dense_oracle_is_independent():
    a = csr_from_coo(2, 2, [(0, 1, 2.0), (1, 0, 3.0)])
    assert dense_oracle(a, [[1, 1], [2, 2]]).tolist() == [[4, 4], [3, 3]]
