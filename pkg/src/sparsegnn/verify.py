"""Self-check suites behind ``sparsegnn verify``.

Each suite compares the kernels or the training engine with an independent
route: dense contractions, brute-force reductions, central differences, or
the same kernel under other thread counts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dispatch import TRUSTED, specialized
from .gnn import GnnModel, ModelKind, TrainingCache, backward, forward, softmax_xent
from .hardware import SWEEP_KS, specialization_set
from .kernels import fusedmm, sddmm, spmm, spmm_with
from .sparse import CsrMatrix, ReduceOp, Semiring, csr_from_arrays, row_degrees

SUITES = ("dense-oracle", "kernel-equivalence", "determinism", "fusedmm", "gradient-check")


def random_csr(rng, n_rows: int, n_cols: int, density: float, dtype=np.float32, symmetric=False) -> CsrMatrix:
    nnz = int(rng.binomial(n_rows * n_cols, density)) if n_rows and n_cols else 0
    flat = rng.choice(n_rows * n_cols, size=nnz, replace=False) if nnz else np.empty(0, np.int64)
    rows, cols = flat // max(n_cols, 1), flat % max(n_cols, 1)
    vals = rng.uniform(0.1, 1.0, size=nnz) if symmetric else rng.standard_normal(nnz)
    if symmetric:
        rows, cols, vals = np.concatenate([rows, cols]), np.concatenate([cols, rows]), np.concatenate([vals, vals])
    return csr_from_arrays(n_rows, n_cols, rows, cols, vals, dtype)


def dense_oracle(a: CsrMatrix, b) -> np.ndarray:
    """Plain i-j-k contraction in float64 over the densified matrix."""
    return np.einsum("ij,jk->ik", a.to_dense().astype(np.float64), np.asarray(b, np.float64), optimize=False)


def scaled_error(c, a: CsrMatrix, b) -> float:
    """Max |C - oracle| relative to (|A| |B|), the natural scale of a sum's rounding error."""
    exact = dense_oracle(a, b)
    scale = np.einsum("ij,jk->ik", np.abs(a.to_dense().astype(np.float64)), np.abs(np.asarray(b, np.float64)))
    err = np.abs(np.asarray(c, np.float64) - exact)
    return float(np.max(err / np.where(scale > 0, scale, 1.0), initial=0.0))


def brute_reduce(a: CsrMatrix, b, reduce: ReduceOp) -> np.ndarray:
    """Row by row: stack the scaled rows of B, then reduce them."""
    b = np.asarray(b)
    out = np.zeros((a.n_rows, b.shape[1]), dtype=np.result_type(a.dtype, b.dtype))
    rp = a.row_ptr.astype(np.int64)
    for i in range(a.n_rows):
        lo, hi = rp[i], rp[i + 1]
        if lo == hi:
            continue
        scaled = a.values[lo:hi, None] * b[a.col_idx[lo:hi].astype(np.int64)]
        if reduce is ReduceOp.MIN:
            out[i] = scaled.min(axis=0)
        elif reduce is ReduceOp.MAX:
            out[i] = scaled.max(axis=0)
        else:
            out[i] = scaled.sum(axis=0, dtype=np.float64) / (hi - lo if reduce is ReduceOp.MEAN else 1)
    return out


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    cases: int
    detail: str
    seconds: float


def _perturb(x: np.ndarray) -> np.ndarray:
    y = np.array(x, copy=True)
    if y.size:
        y.flat[0] = np.nextafter(y.flat[0], np.inf)
    return y


def _check_dense_oracle(rng, max_n, cases, inject):
    worst32 = worst64 = 0.0
    for case in range(cases):
        n, m = int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_n + 1))
        k = int(rng.integers(1, 129))
        a = random_csr(rng, n, m, float(rng.uniform(0, 0.1)))
        b = rng.standard_normal((m, k)).astype(np.float32)
        c = spmm(a, b)
        if inject:
            c = _perturb(c) * 2
        worst32 = max(worst32, scaled_error(c, a, b))
        worst64 = max(worst64, scaled_error(spmm(a.astype(np.float64), b.astype(np.float64)), a, b))
        for op in (ReduceOp.MIN, ReduceOp.MAX):
            if spmm(a, b, op).tobytes() != brute_reduce(a, b, op).tobytes():
                return False, f"case {case}: {op.value} differs from brute force"
        deg = row_degrees(a)
        want = np.zeros_like(c)
        nz = deg > 0
        want[nz] = spmm(a, b)[nz] / deg[nz, None].astype(np.float32)
        if spmm(a, b, ReduceOp.MEAN).tobytes() != want.tobytes():
            return False, f"case {case}: mean != sum/degree"
    ok = worst32 <= 1e-4 and worst64 <= 1e-10
    return ok, f"worst relative error f32 {worst32:.2e} (<=1e-4), f64 {worst64:.2e} (<=1e-10)"


def _check_kernel_equivalence(rng, max_n, cases, inject):
    for k in sorted(specialization_set()):
        for _ in range(cases):
            n = int(rng.integers(1, max_n + 1))
            a = random_csr(rng, n, n, float(rng.uniform(0, 0.1)))
            b = rng.standard_normal((n, k)).astype(np.float32)
            ref = spmm_with(a, b, ReduceOp.SUM, TRUSTED)
            out = spmm_with(a, b, ReduceOp.SUM, specialized(k))
            if inject:
                out = _perturb(out)
            if ref.tobytes() != out.tobytes():
                return False, f"specialized(K={k}) differs from trusted on n={n}"
    return True, f"K in {sorted(specialization_set())} bitwise equal"


def _check_determinism(rng, max_n, cases, inject):
    for case in range(cases):
        n = int(rng.integers(1, max_n + 1))
        a = random_csr(rng, n, n, float(rng.uniform(0, 0.1)))
        b = rng.standard_normal((n, int(rng.choice([8, 16, 32, 33])))).astype(np.float32)
        outs = [spmm(a, b, threads=t) for t in (1, 2, 4, 8)]
        if inject:
            outs[-1] = _perturb(outs[-1])
        if any(o.tobytes() != outs[0].tobytes() for o in outs[1:]):
            return False, f"case {case}: output depends on thread count"
    return True, "threads 1/2/4/8 bitwise equal"


def _check_fusedmm(rng, max_n, cases, inject):
    worst = 0.0
    for _ in range(cases):
        n, m = int(rng.integers(1, min(max_n, 128) + 1)), int(rng.integers(1, min(max_n, 128) + 1))
        k = int(rng.integers(1, 33))
        p = random_csr(rng, n, m, float(rng.uniform(0, 0.1)))
        x = rng.standard_normal((n, k)).astype(np.float32)
        y = rng.standard_normal((m, k)).astype(np.float32)
        for op in ReduceOp:
            got = fusedmm(p, x, y, Semiring(reduce=op))
            want = spmm(sddmm(p, x, y), y, op)
            if inject:
                got = got + 1
            scale = np.maximum(np.abs(want), 1e-6)
            worst = max(worst, float(np.max(np.abs(got - want) / scale, initial=0.0)))
    return worst <= 1e-5, f"worst relative error {worst:.2e} (<=1e-5)"


def masked_loss(model, cache, x, labels, mask) -> float:
    logits, _ = forward(model, cache, x)
    return softmax_xent(logits, labels, mask)[0]


def finite_difference_grads(model, cache, x, labels, mask, step=1e-5):
    """Central differences of the masked loss for every parameter entry."""
    grads = {}
    for name, w in model.params.items():
        g = np.zeros(w.shape)
        for idx in np.ndindex(w.shape):
            plus, minus = model.copy(), model.copy()
            plus.params[name][idx] += step
            minus.params[name][idx] -= step
            g[idx] = (masked_loss(plus, cache, x, labels, mask) - masked_loss(minus, cache, x, labels, mask)) / (
                2 * step
            )
        grads[name] = g
    return grads


def gradient_error(analytic, numeric, floor=1e-3) -> float:
    """Largest entrywise |a - n| / max(|a|, |n|, floor)."""
    worst = 0.0
    for name, a in analytic.items():
        a, n = np.asarray(a, np.float64), np.asarray(numeric[name], np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom, initial=0.0)))
    return worst


def gradient_case(kind, rng, n_nodes=10, in_features=5, hidden=6, classes=3):
    a = random_csr(rng, n_nodes, n_nodes, 0.25, np.float64, symmetric=kind != ModelKind.SAGE_MEAN)
    if kind is ModelKind.SAGE_MEAN:
        a = a.with_values(np.abs(a.values))
    x = rng.standard_normal((n_nodes, in_features))
    labels = rng.integers(0, classes, n_nodes)
    mask = rng.random(n_nodes) < 0.7
    mask[0] = True
    model = GnnModel.init(kind, in_features, hidden, classes, seed=int(rng.integers(1 << 30)), dtype=np.float64)
    if kind is ModelKind.GIN:
        model.params["eps"][...] = 0.3
    return model, TrainingCache.build(kind, a, dtype=np.float64), x, labels, mask


def _check_gradients(rng, max_n, cases, inject):
    worst = 0.0
    for kind in ModelKind:
        for _ in range(max(1, cases // 4)):
            model, cache, x, labels, mask = gradient_case(kind, rng, n_nodes=int(rng.integers(8, 17)))
            logits, tape = forward(model, cache, x)
            _, g = softmax_xent(logits, labels, mask)
            analytic = backward(model, cache, tape, g)
            if inject:
                analytic["w1"] = analytic["w1"] * 1.01
            worst = max(worst, gradient_error(analytic, finite_difference_grads(model, cache, x, labels, mask)))
    return worst <= 1e-6, f"worst relative gradient error {worst:.2e} (<=1e-6)"


_CHECKS = {
    "dense-oracle": (_check_dense_oracle, 40),
    "kernel-equivalence": (_check_kernel_equivalence, 3),
    "determinism": (_check_determinism, 20),
    "fusedmm": (_check_fusedmm, 20),
    "gradient-check": (_check_gradients, 4),
}


def run_suites(max_n: int = 256, seed: int = 0, inject: str | None = None, suites=SUITES) -> list[SuiteResult]:
    """Run the named suites; ``inject`` names one suite to corrupt on purpose."""
    if inject is not None and inject not in SUITES:
        raise ValueError(f"unknown suite {inject!r}; expected one of {SUITES}")
    results = []
    for name in suites:
        check, cases = _CHECKS[name]
        rng = np.random.default_rng([seed, SUITES.index(name)])
        t0 = time.perf_counter()
        ok, detail = check(rng, max_n, cases, inject == name)
        results.append(SuiteResult(name, ok, cases, detail, time.perf_counter() - t0))
    return results
