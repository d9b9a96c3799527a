import dataclasses

import numpy as np
import pytest

from sparsegnn import ConfigError, ParseError, autotune, kernels
from sparsegnn.autotune import (
    TuningEntry,
    TuningReport,
    candidate_ks,
    load_report,
    pick_best_k,
    run_tuning,
    save_report,
)
from sparsegnn.dispatch import TRUSTED, get_dispatch, patch, resolve_kind, set_dispatch, specialized, tuned, unpatch
from sparsegnn.errors import KernelMismatchError
from sparsegnn.hardware import SWEEP_KS, HardwareProfile, detect_hardware, specialization_set
from sparsegnn.kernels import spmm
from sparsegnn.sparse import ReduceOp
from sparsegnn.verify import random_csr

AVX2 = "processor\t: 0\nflags\t\t: fpu sse sse2 avx avx2 fma\n"
AVX512 = "processor\t: 0\nflags\t\t: fpu sse2 avx2 avx512f avx512bw\n"
NEON = "processor\t: 0\nFeatures\t: fp asimd evtstrm\n"


def profile(vlen):
    return HardwareProfile.from_bits(vlen * 32, cores=1, description="test")


@pytest.mark.parametrize(
    "text, machine, vlen",
    [(AVX2, "x86_64", 8), (AVX512, "x86_64", 16), (NEON, "aarch64", 4), ("", "aarch64", 4)],
)
def test_detect_hardware(monkeypatch, text, machine, vlen):
    monkeypatch.delenv("SPARSEGNN_SIMD_BITS", raising=False)
    p = detect_hardware(text, machine)
    assert p.vlen == vlen and p.simd_bits == vlen * 32 and p.cores >= 1


def test_detect_unknown_is_fallback(monkeypatch):
    monkeypatch.delenv("SPARSEGNN_SIMD_BITS", raising=False)
    p = detect_hardware("model name: mystery\n", "riscv64")
    assert p.vlen == 8 and p.description == "fallback"


def test_env_forces_width(monkeypatch):
    monkeypatch.setenv("SPARSEGNN_SIMD_BITS", "128")
    assert detect_hardware().vlen == 4


def test_candidate_ks_examples():
    assert candidate_ks(profile(8), 16, 1024) == [16, 32, 64, 128, 256, 512, 1024]
    assert candidate_ks(profile(16), 16, 64) == [16, 32, 64]
    assert candidate_ks(profile(8), 17, 31) == []
    with pytest.raises(ConfigError):
        candidate_ks(profile(8), 64, 16)


@pytest.mark.parametrize("vlen", [4, 8, 16])
def test_candidate_ks_subset_of_sweep(vlen):
    ks = candidate_ks(profile(vlen), 1, 4096)
    assert set(ks) <= set(SWEEP_KS)
    assert all(k % vlen == 0 for k in ks)
    assert set(ks) == specialization_set(profile(vlen))


def test_pick_best_k_ties_go_small():
    entries = [TuningEntry.from_times(k, 2.0, 1.0) for k in (64, 32, 128)]
    assert pick_best_k(entries) == 32
    entries.append(TuningEntry.from_times(256, 3.0, 1.0))
    assert pick_best_k(entries) == 256
    with pytest.raises(ConfigError):
        pick_best_k([])


def test_entry_units():
    e = TuningEntry.from_times(16, 3.0, 2.0)
    assert e.speedup == 1.5 and e.t_trusted == 0.003 and e.t_specialized == 0.002


def report():
    entries = tuple(TuningEntry.from_times(k, 1.0 + k / 7, 0.3 + 1 / k) for k in (16, 32, 64))
    return TuningReport(entries, pick_best_k(entries), profile(16), "graph-a", (48,))


def test_report_round_trip(tmp_path):
    r = report()
    save_report(r, tmp_path / "r.csv")
    assert load_report(tmp_path / "r.csv") == r


def test_report_layout(tmp_path):
    save_report(report(), tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "k,t_trusted_ms,t_specialized_ms,speedup"
    assert any(line.startswith("best_k,") for line in lines)
    assert "vlen,16" in lines
    for line in lines[1:4]:
        k, tt, ts, s = line.split(",")
        assert abs(float(s) - float(tt) / float(ts)) <= 1e-9


def _rewrite(path, drop=None, replace=None):
    lines = path.read_text().splitlines()
    if drop:
        lines = [x for x in lines if not x.startswith(drop)]
    if replace:
        lines = [replace[1] if x.startswith(replace[0]) else x for x in lines]
    path.write_text("\n".join(lines) + "\n")


def test_missing_best_k(tmp_path):
    path = tmp_path / "r.csv"
    save_report(report(), path)
    _rewrite(path, drop="best_k")
    with pytest.raises(ParseError, match="best_k"):
        load_report(path)


def test_wrong_speedup_reports_line(tmp_path):
    path = tmp_path / "r.csv"
    save_report(report(), path)
    _rewrite(path, replace=("32,", "32,1.0,1.0,2.0"))
    with pytest.raises(ParseError, match="line 3"):
        load_report(path)


def test_bad_header(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("k,speedup\nbest_k,16\nvlen,16\n")
    with pytest.raises(ParseError, match="line 1"):
        load_report(path)


def test_best_k_must_be_argmax(tmp_path):
    path = tmp_path / "r.csv"
    save_report(report(), path)
    assert report().best_k == 64
    _rewrite(path, replace=("best_k", "best_k,16"))
    with pytest.raises(ParseError, match="argmax"):
        load_report(path)


def test_run_tuning_small(rng):
    a = random_csr(rng, 300, 300, 0.03)
    ks = sorted(specialization_set())[:2]
    r = run_tuning(a, ks, reps=3, graph_id="small")
    assert [e.k for e in r.entries] == ks
    assert r.best_k == pick_best_k(r.entries)
    assert all(e.t_trusted_ms > 0 and e.t_specialized_ms > 0 for e in r.entries)
    assert all(e.speedup == e.t_trusted_ms / e.t_specialized_ms for e in r.entries)


def test_run_tuning_skips_unavailable(rng):
    a = random_csr(rng, 50, 50, 0.05)
    k = min(specialization_set())
    r = run_tuning(a, [48, k], reps=3)
    assert [e.k for e in r.entries] == [k] and r.skipped == (48,)
    with pytest.raises(ConfigError):
        run_tuning(a, [48], reps=3)
    with pytest.raises(ConfigError):
        run_tuning(a, [k], reps=2)


def test_run_tuning_detects_mismatch(rng, monkeypatch):
    real = autotune.spmm_with

    def broken(a, b, reduce, kind, **kw):
        out = real(a, b, reduce, kind, **kw)
        return out if kind.is_trusted else out + 1

    monkeypatch.setattr(autotune, "spmm_with", broken)
    with pytest.raises(KernelMismatchError):
        run_tuning(random_csr(rng, 40, 40, 0.1), [min(specialization_set())], reps=3)


def test_dispatch_resolution():
    k = min(specialization_set())
    set_dispatch(False)
    assert all(resolve_kind(kk) == TRUSTED for kk in SWEEP_KS)
    assert not get_dispatch().tuned_enabled
    set_dispatch(True)
    assert resolve_kind(k) == specialized(k)
    assert resolve_kind(48) == TRUSTED
    for op in ("min", "max", "mean"):
        assert resolve_kind(k, op) == TRUSTED


def test_patch_unpatch_and_context():
    assert unpatch().tuned_enabled is False
    with tuned(True):
        assert get_dispatch().tuned_enabled
    assert not get_dispatch().tuned_enabled
    assert patch().tuned_enabled
    assert get_dispatch().specialization_set == specialization_set()


def test_dispatch_transparency(rng):
    a = random_csr(rng, 120, 120, 0.05)
    for k in sorted(specialization_set())[:3]:
        b = rng.standard_normal((120, k)).astype(np.float32)
        with tuned(True):
            on = spmm(a, b)
        with tuned(False):
            off = spmm(a, b)
        assert on.tobytes() == off.tobytes()


def test_report_is_frozen():
    with pytest.raises(dataclasses.FrozenInstanceError):
        report().best_k = 3
