"""SIMD width probing."""

from __future__ import annotations

import functools
import os
import platform
from dataclasses import dataclass

SIMD_BITS_ENV = "SPARSEGNN_SIMD_BITS"

# embedding sizes that get a fixed-K kernel
SWEEP_KS = (16, 32, 64, 128, 256, 512, 1024)

FALLBACK_SIMD_BITS = 256


@dataclass(frozen=True)
class HardwareProfile:
    simd_bits: int
    vlen: int
    cores: int
    description: str

    @classmethod
    def from_bits(cls, simd_bits: int, cores: int | None = None, description: str = "") -> "HardwareProfile":
        simd_bits = int(simd_bits)
        if simd_bits not in (128, 256, 512):
            raise ValueError(f"unsupported vector width {simd_bits} bits")
        return cls(simd_bits, simd_bits // 32, cores or os.cpu_count() or 1, description)


def fallback_profile(cores: int | None = None) -> HardwareProfile:
    return HardwareProfile.from_bits(FALLBACK_SIMD_BITS, cores, "fallback")


def _bits_from_flags(flags: set[str]) -> tuple[int, str] | None:
    if "avx512f" in flags:
        return 512, "x86 avx512f"
    if "avx2" in flags:
        return 256, "x86 avx2"
    if "avx" in flags:
        return 256, "x86 avx"
    if "sse2" in flags:
        return 128, "x86 sse2"
    if "asimd" in flags or "neon" in flags:
        return 128, "arm neon"
    return None


def _parse_cpuinfo(text: str) -> set[str]:
    flags: set[str] = set()
    for line in text.splitlines():
        key, _, value = line.partition(":")
        if key.strip().lower() in ("flags", "features"):
            flags.update(value.split())
    return flags


def detect_hardware(cpuinfo: str | None = None, machine: str | None = None) -> HardwareProfile:
    """Probe the vector register width.

    ``cpuinfo`` and ``machine`` override what would be read from the host.
    Anything unrecognised yields the fallback profile (256 bits, vlen 8).
    """
    forced = os.environ.get(SIMD_BITS_ENV, "").strip()
    if forced and cpuinfo is None:
        return HardwareProfile.from_bits(int(forced), description=f"forced by {SIMD_BITS_ENV}")
    if cpuinfo is None:
        try:
            with open("/proc/cpuinfo") as fh:
                cpuinfo = fh.read()
        except OSError:
            cpuinfo = ""
    found = _bits_from_flags(_parse_cpuinfo(cpuinfo))
    if found is None:
        machine = (machine if machine is not None else platform.machine()).lower()
        if machine in ("arm64", "aarch64"):
            found = (128, "arm neon")
    if found is None:
        return fallback_profile()
    bits, desc = found
    return HardwareProfile.from_bits(bits, description=desc)


@functools.lru_cache(maxsize=None)
def host_profile() -> HardwareProfile:
    return detect_hardware()


def specialization_set(profile: HardwareProfile | None = None) -> frozenset[int]:
    """K values with a fixed-K kernel on this profile."""
    vlen = (profile or host_profile()).vlen
    return frozenset(k for k in SWEEP_KS if k % vlen == 0)
