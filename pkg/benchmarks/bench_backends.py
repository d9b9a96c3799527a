"""Compare the numba and pure-numpy kernel backends.

Times trusted and fixed-K Sum SpMM (plus Max and FusedMM) for each backend on
a planted-partition graph, and checks that both backends return the same
bits before printing anything.

    python3 benchmarks/bench_backends.py --n 20000 --deg 16 --ks 16,64,256
"""

import argparse
import statistics
import time

import numpy as np

from sparsegnn import kernels
from sparsegnn.data import planted_for_degree
from sparsegnn.dispatch import TRUSTED, specialized
from sparsegnn.hardware import specialization_set
from sparsegnn.reports import write_table
from sparsegnn.sparse import ReduceOp, Semiring

BACKENDS = ("numba", "numpy")


def median_ms(fn, reps):
    fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(samples)


def cases(a, k, rng):
    b = rng.standard_normal((a.n_cols, k)).astype(np.float32)
    yield "trusted-sum", lambda t: kernels.spmm_with(a, b, ReduceOp.SUM, TRUSTED, threads=t)
    if k in specialization_set():
        yield "specialized-sum", lambda t: kernels.spmm_with(a, b, ReduceOp.SUM, specialized(k), threads=t)
    yield "trusted-max", lambda t: kernels.spmm_with(a, b, ReduceOp.MAX, TRUSTED, threads=t)
    if k <= 64:
        sr = Semiring()
        yield "fusedmm-sum", lambda t: kernels.fusedmm(a, b, b, sr, threads=t)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--deg", type=float, default=16)
    ap.add_argument("--ks", default="16,64,256")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write results as CSV")
    args = ap.parse_args(argv)

    a = planted_for_degree(args.n, 8, args.deg, feat_dim=8, noise=0.0, seed=args.seed).adjacency
    print(f"graph: {a.n_rows} nodes, {a.nnz} nonzeros; numba available: {kernels._numba_kernels is not None}")
    print(f"{'K':>5} {'kernel':<16} {'numba_ms':>10} {'numpy_ms':>10} {'ratio':>7}")
    rows = []
    for k in (int(s) for s in args.ks.split(",")):
        outputs, times = {}, {}
        for backend in BACKENDS:
            with kernels.use_backend(backend):
                for name, fn in cases(a, k, np.random.default_rng(args.seed)):
                    outputs[backend, name] = fn(args.threads).tobytes()
                    times[backend, name] = median_ms(lambda: fn(args.threads), args.reps)
        for name in dict.fromkeys(n for _, n in times):
            if outputs["numba", name] != outputs["numpy", name]:
                raise SystemExit(f"backends disagree on {name} K={k}")
            fast, slow = times["numba", name], times["numpy", name]
            rows.append((k, name, fast, slow, slow / fast))
            print(f"{k:>5} {name:<16} {fast:>10.3f} {slow:>10.3f} {slow / fast:>7.2f}")
    if args.out:
        write_table(args.out, ["k", "kernel", "numba_ms", "numpy_ms", "numpy_over_numba"], rows, [("nnz", a.nnz)])


if __name__ == "__main__":
    main()
