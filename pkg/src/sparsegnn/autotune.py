"""K-sweep tuning: time fixed-K kernels against the trusted kernel.

The report is the speedup-vs-K curve for one graph; its argmax (smaller K
on ties) is the suggested embedding size.
"""

from __future__ import annotations

import logging
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .dispatch import TRUSTED, DispatchState, get_dispatch, patch, set_dispatch, specialized, tuned, unpatch
from .errors import ConfigError, KernelMismatchError, ParseError
from .hardware import SWEEP_KS, HardwareProfile, detect_hardware, host_profile, specialization_set
from .kernels import spmm_with
from .reports import read_table, write_table
from .sparse import CsrMatrix, ReduceOp

log = logging.getLogger(__name__)

__all__ = [
    "HardwareProfile",
    "DispatchState",
    "TuningEntry",
    "TuningReport",
    "SWEEP_KS",
    "detect_hardware",
    "candidate_ks",
    "run_tuning",
    "save_report",
    "load_report",
    "set_dispatch",
    "get_dispatch",
    "patch",
    "unpatch",
    "tuned",
]

REPORT_HEADER = ["k", "t_trusted_ms", "t_specialized_ms", "speedup"]


@dataclass(frozen=True)
class TuningEntry:
    k: int
    t_trusted_ms: float
    t_specialized_ms: float
    speedup: float

    @classmethod
    def from_times(cls, k: int, t_trusted_ms: float, t_specialized_ms: float) -> "TuningEntry":
        return cls(int(k), float(t_trusted_ms), float(t_specialized_ms), t_trusted_ms / t_specialized_ms)

    @property
    def t_trusted(self) -> float:
        """Seconds."""
        return self.t_trusted_ms / 1e3

    @property
    def t_specialized(self) -> float:
        return self.t_specialized_ms / 1e3


def pick_best_k(entries) -> int:
    """Largest speedup; the smaller K wins ties."""
    if not entries:
        raise ConfigError("no tuning entries")
    return max(entries, key=lambda e: (e.speedup, -e.k)).k


@dataclass(frozen=True)
class TuningReport:
    entries: tuple[TuningEntry, ...]
    best_k: int
    profile: HardwareProfile
    graph_id: str = ""
    skipped: tuple[int, ...] = field(default=())

    def speedups(self) -> dict[int, float]:
        return {e.k: e.speedup for e in self.entries}


def candidate_ks(profile: HardwareProfile, k_min: int, k_max: int, sweep=SWEEP_KS) -> list[int]:
    """Sweep sizes in ``[k_min, k_max]`` that are multiples of the vector length."""
    if k_min > k_max:
        raise ConfigError(f"k_min {k_min} > k_max {k_max}")
    return [k for k in sorted(sweep) if k_min <= k <= k_max and k % profile.vlen == 0]


def _median_ms(fn, reps: int) -> float:
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(samples)


def run_tuning(
    a: CsrMatrix,
    ks,
    reps: int = 5,
    threads: int | None = None,
    *,
    seed: int = 0,
    graph_id: str = "",
    profile: HardwareProfile | None = None,
    dtype=np.float32,
) -> TuningReport:
    """Time trusted vs. fixed-K Sum SpMM for each K on graph ``a``.

    Each K gets a seeded random dense operand, one untimed warmup of each
    kernel (which also compiles it), then ``reps`` timed runs whose medians
    are compared. Outputs of the two kernels must match bit for bit.
    """
    ks = list(ks)
    if not ks:
        raise ConfigError("need at least one K to tune")
    if reps < 3:
        raise ConfigError(f"reps must be >= 3, got {reps}")
    profile = profile or host_profile()
    available = specialization_set(profile)
    a = a.astype(dtype)
    entries, skipped = [], []
    for k in ks:
        if k not in available:
            log.warning("K=%d has no specialised kernel on %s; skipped", k, profile.description)
            skipped.append(int(k))
            continue
        b = np.random.default_rng(seed).standard_normal((a.n_cols, k)).astype(dtype)
        kind = specialized(k)
        ref = spmm_with(a, b, ReduceOp.SUM, TRUSTED, threads=threads)
        out = spmm_with(a, b, ReduceOp.SUM, kind, threads=threads)
        if ref.tobytes() != out.tobytes():
            raise KernelMismatchError(f"{kind} disagrees with the trusted kernel on {graph_id or 'graph'}")
        del ref, out
        t_trusted = _median_ms(lambda: spmm_with(a, b, ReduceOp.SUM, TRUSTED, threads=threads), reps)
        t_special = _median_ms(lambda: spmm_with(a, b, ReduceOp.SUM, kind, threads=threads), reps)
        entries.append(TuningEntry.from_times(k, t_trusted, t_special))
        log.info("K=%d trusted %.3f ms specialised %.3f ms", k, t_trusted, t_special)
    if not entries:
        raise ConfigError(f"none of K={ks} has a specialised kernel")
    return TuningReport(tuple(entries), pick_best_k(entries), profile, graph_id, tuple(skipped))


def save_report(report: TuningReport, path) -> None:
    rows = [(e.k, e.t_trusted_ms, e.t_specialized_ms, e.speedup) for e in report.entries]
    p = report.profile
    footer = [
        ("best_k", report.best_k),
        ("vlen", p.vlen),
        ("simd_bits", p.simd_bits),
        ("cores", p.cores),
        ("description", p.description),
        ("graph_id", report.graph_id),
    ]
    footer += [("skipped", k) for k in report.skipped]
    write_table(path, REPORT_HEADER, rows, footer)


def load_report(path) -> TuningReport:
    rows, footer = read_table(path, REPORT_HEADER)
    entries = []
    for lineno, fields in rows:
        try:
            k = int(fields[0])
            t_t, t_s, speedup = (float(x) for x in fields[1:])
        except ValueError:
            raise ParseError(f"bad data row {','.join(fields)!r}", lineno, path) from None
        if not (t_t > 0 and t_s > 0 and math.isfinite(t_t) and math.isfinite(t_s)):
            raise ParseError("times must be positive", lineno, path)
        if abs(speedup - t_t / t_s) > 1e-9 * max(1.0, abs(speedup)):
            raise ParseError(f"speedup {speedup} does not equal {t_t}/{t_s}", lineno, path)
        entries.append(TuningEntry(k, t_t, t_s, speedup))
    meta: dict[str, tuple[int, str]] = {}
    skipped = []
    for lineno, key, value in footer:
        if key == "skipped":
            skipped.append(int(value))
        else:
            meta[key] = (lineno, value)
    for required in ("best_k", "vlen"):
        if required not in meta:
            raise ParseError(f"missing {required!r} footer line", 0, path)

    def as_int(key, default=None):
        if key not in meta:
            return default
        lineno, value = meta[key]
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"{key} must be an integer, got {value!r}", lineno, path) from None

    best_k, vlen = as_int("best_k"), as_int("vlen")
    simd_bits = as_int("simd_bits", vlen * 32)
    if simd_bits != vlen * 32:
        raise ParseError(f"vlen {vlen} inconsistent with simd_bits {simd_bits}", meta["simd_bits"][0], path)
    if entries and best_k != pick_best_k(entries):
        raise ParseError(f"best_k {best_k} is not the tie-broken argmax", meta["best_k"][0], path)
    profile = HardwareProfile(simd_bits, vlen, as_int("cores", 1), meta.get("description", (0, ""))[1])
    return TuningReport(tuple(entries), best_k, profile, meta.get("graph_id", (0, ""))[1], tuple(skipped))
