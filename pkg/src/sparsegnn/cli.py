"""``sparsegnn`` command line: tune, bench, train, verify.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 internal
consistency failure (kernels disagreeing).
"""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
import time

import numpy as np

from . import autotune, data, gnn, kernels, verify
from .config import THREADS_ENV, resolve_threads
from .dispatch import TRUSTED, resolve_kind, tuned
from .errors import KernelMismatchError, SparseGnnError
from .hardware import host_profile, specialization_set
from .reports import write_table
from .sparse import ReduceOp

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("sparsegnn")

SYNTH_DEFAULTS = {"c": 4, "p_intra": 0.1, "p_inter": 0.01, "feat_dim": 16, "noise": 0.1}


class InputError(Exception):
    pass


def parse_synth(text: str, seed: int) -> dict:
    """``n=400,c=4,...`` -> keyword arguments; ``deg`` picks probabilities from an average degree."""
    params = dict(SYNTH_DEFAULTS, seed=seed)
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--synth entries must be key=value, got {item!r}")
        key = {"classes": "c"}.get(key.strip(), key.strip())
        if key not in ("n", "c", "p_intra", "p_inter", "feat_dim", "noise", "seed", "deg"):
            raise InputError(f"unknown --synth key {key!r}")
        try:
            params[key] = float(value) if key in ("p_intra", "p_inter", "noise", "deg") else int(value)
        except ValueError:
            raise InputError(f"bad value for {key}: {value!r}") from None
    if "n" not in params:
        raise InputError("--synth needs n=<nodes>")
    return params


def synth_dataset(text: str, seed: int) -> data.Dataset:
    p = parse_synth(text, seed)
    common = dict(feat_dim=p["feat_dim"], noise=p["noise"], seed=p["seed"])
    if "deg" in p:
        return data.planted_for_degree(p["n"], p["c"], p["deg"], **common)
    return data.synth_planted(p["n"], p["c"], p["p_intra"], p["p_inter"], **common)


def _graph(args):
    if args.synth:
        ds = synth_dataset(args.synth, args.seed)
        return ds.adjacency, ds.name
    if not args.graph:
        raise InputError("need --graph PATH or --synth n=...")
    return data.load_mtx(args.graph), args.graph


def _threads(args) -> int:
    return resolve_threads(args.threads)


def _ms(x: float) -> str:
    return f"{x:.3f}"


def cmd_tune(args) -> int:
    a, graph_id = _graph(args)
    profile = host_profile()
    if args.ks:
        ks = [int(k) for k in args.ks.split(",") if k.strip()]
    else:
        ks = autotune.candidate_ks(profile, args.k_min, args.k_max)
    if not ks:
        raise InputError(f"no candidate K in [{args.k_min}, {args.k_max}] for vlen {profile.vlen}")
    print(f"hardware: {profile.description} ({profile.simd_bits}-bit, vlen {profile.vlen}, {profile.cores} cores)")
    print(f"graph: {graph_id} ({a.n_rows} nodes, {a.nnz} nonzeros); K = {','.join(map(str, ks))}")
    report = autotune.run_tuning(
        a, ks, reps=args.reps, threads=_threads(args), seed=args.seed, graph_id=str(graph_id), profile=profile
    )
    print(f"{'K':>6} {'trusted_ms':>12} {'specialized_ms':>15} {'speedup':>8}")
    for e in report.entries:
        print(f"{e.k:>6} {_ms(e.t_trusted_ms):>12} {_ms(e.t_specialized_ms):>15} {e.speedup:>8.3f}")
    for k in report.skipped:
        print(f"warning: K={k} has no specialised kernel; skipped")
    if args.out:
        autotune.save_report(report, args.out)
        print(f"report written to {args.out}")
    print(f"best_k: {report.best_k}")
    return EXIT_OK


def _median_ms(fn, reps):
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(samples)


def cmd_bench(args) -> int:
    a, graph_id = _graph(args)
    threads = _threads(args)
    reduce = ReduceOp.parse(args.reduce)
    b = np.random.default_rng(args.seed).standard_normal((a.n_cols, args.k)).astype(a.dtype)
    print(f"graph: {graph_id} ({a.n_rows} nodes, {a.nnz} nonzeros); K={args.k} reduce={reduce.value} threads={threads}")
    with tuned(not args.no_tuned):
        kind = resolve_kind(args.k, reduce)
    if not args.no_tuned and kind.is_trusted:
        if reduce is not ReduceOp.SUM:
            print(f"note: only sum has specialised kernels; {reduce.value} runs on the trusted kernel only")
        else:
            print(f"note: no specialised kernel for K={args.k} (have {sorted(specialization_set())}); trusted only")
    ref = kernels.spmm_with(a, b, reduce, TRUSTED, threads=threads)
    if not kind.is_trusted:
        out = kernels.spmm_with(a, b, reduce, kind, threads=threads)
        if ref.tobytes() != out.tobytes():
            raise KernelMismatchError(f"{kind} output differs from the trusted kernel")
    t_trusted = _median_ms(lambda: kernels.spmm_with(a, b, reduce, TRUSTED, threads=threads), args.reps)
    print(f"trusted: {_ms(t_trusted)} ms")
    if not kind.is_trusted:
        t_spec = _median_ms(lambda: kernels.spmm_with(a, b, reduce, kind, threads=threads), args.reps)
        print(f"{kind}: {_ms(t_spec)} ms")
        print(f"speedup: {t_trusted / t_spec:.3f}")
    return EXIT_OK


def _dataset(args) -> data.Dataset:
    if args.synth:
        return synth_dataset(args.synth, args.seed)
    missing = [f for f in ("graph", "features", "labels") if not getattr(args, f)]
    if missing:
        raise InputError("need --synth or all of --graph, --features, --labels (missing: " + ", ".join(missing) + ")")
    return data.load_dataset(args.graph, args.features, args.labels, args.mask)


def cmd_train(args) -> int:
    ds = _dataset(args)
    threads = _threads(args)
    model = gnn.GnnModel.init(args.model, ds.features.shape[1], args.hidden, max(ds.n_classes, 1), seed=args.seed)
    print(
        f"dataset: {ds.name} ({ds.n_nodes} nodes, {ds.adjacency.nnz} nonzeros, {ds.features.shape[1]} features, "
        f"{ds.n_classes} classes); model {model.kind.value}, hidden {args.hidden}, threads {threads}, "
        f"tuned {'off' if args.no_tuned else 'on'}, cache {'off' if args.no_cache else 'on'}"
    )

    def show(s: gnn.EpochStats):
        print(f"epoch {s.epoch:4d}  loss {s.loss:.6f}  acc {s.train_accuracy:.4f}  time {_ms(s.epoch_time * 1e3)} ms")

    model, stats, cache = gnn.train(
        model, ds.adjacency, ds.features, ds.labels, ds.train_mask, args.epochs, args.lr, threads,
        use_tuned=not args.no_tuned, use_cache=not args.no_cache, callback=None if args.quiet else show,
    )
    mean_ms = statistics.fmean(s.epoch_time for s in stats) * 1e3
    counters = cache.counters()
    print(f"final loss {stats[-1].loss:.6f}  final accuracy {stats[-1].train_accuracy:.4f}")
    print(f"average epoch time: {_ms(mean_ms)} ms")
    print(" ".join(f"{k}={v}" for k, v in counters.items()))
    if args.out:
        rows = [(s.epoch, s.loss, s.train_accuracy, s.epoch_time * 1e3) for s in stats]
        footer = [("mean_epoch_time_ms", f"{mean_ms:.16e}"), ("model", model.kind.value), *counters.items()]
        write_table(args.out, ["epoch", "loss", "train_accuracy", "epoch_time_ms"], rows, footer)
        print(f"stats written to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_suites(max_n=args.max_n, seed=args.seed, inject=args.inject_failure)
    print(f"{'suite':<20} {'result':<6} {'seconds':>8}  detail")
    for r in results:
        print(f"{r.name:<20} {'pass' if r.passed else 'FAIL':<6} {r.seconds:>8.2f}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed suites: " + ", ".join(failed))
        return EXIT_VERIFY
    print("all suites passed")
    return EXIT_OK


def _add_graph_args(p, with_features=False):
    p.add_argument("--graph", help="Matrix Market graph file")
    p.add_argument("--synth", help="synthetic planted partition, e.g. n=400,c=4 or n=100000,c=10,deg=20")
    if with_features:
        p.add_argument("--features", help="feature matrix file ('n k' header)")
        p.add_argument("--labels", help="label file ('n' header)")
        p.add_argument("--mask", help="training mask file ('n' header); default: all nodes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsegnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV}, else core count)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("tune", parents=[common], help="sweep K and write a tuning report")
    _add_graph_args(p)
    p.add_argument("--ks", help="comma-separated K values (default: sweep sizes that fit the vector length)")
    p.add_argument("--k-min", type=int, default=16)
    p.add_argument("--k-max", type=int, default=1024)
    p.add_argument("--reps", type=int, default=5)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bench", parents=[common], help="time trusted vs specialised SpMM for one K")
    _add_graph_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--reduce", default="sum", choices=[op.value for op in ReduceOp])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--no-tuned", action="store_true", help="time the trusted kernel only")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", parents=[common], help="train a two-layer GNN")
    _add_graph_args(p, with_features=True)
    p.add_argument("--model", default="gcn", choices=[m.value for m in gnn.ModelKind])
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--no-tuned", action="store_true", help="route every SpMM to the trusted kernel")
    p.add_argument("--no-cache", action="store_true", help="rebuild the transposed matrix every epoch")
    p.add_argument("--quiet", action="store_true", help="skip per-epoch lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", parents=[common], help="run the oracle and property suites")
    p.add_argument("--max-n", type=int, default=256, help="largest random matrix dimension")
    p.add_argument("--inject-failure", metavar="SUITE", choices=verify.SUITES, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except KernelMismatchError as exc:
        print(f"error: internal consistency failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (InputError, SparseGnnError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
