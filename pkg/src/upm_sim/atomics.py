"""Atomic-update throughput under contention: the histogram workload.

Random elements of a shared array are atomically incremented by CPU
threads, GPU threads, or both. CPU integer updates use native atomic adds
whose cost grows with cache-line ping-pong; CPU floating-point updates go
through a compare-and-swap loop that additionally retries under
collisions. GPU updates run on dedicated atomic units at the shared L2,
so both element types behave identically there and the L1 residency of
the array does not matter.

Thread counts are model inputs, not implementation threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .machine import MachineProfile


class Dtype(enum.Enum):
    UINT64 = "uint64"
    FP64 = "fp64"

    @property
    def element_bytes(self) -> int:
        return 8


class InvalidWorkload(Exception):
    pass


@dataclass(frozen=True)
class AtomicsWorkload:
    cpu_threads: int
    gpu_threads: int          # multiple of the 64-wide wavefront
    array_len: int
    dtype: Dtype = Dtype.UINT64


@dataclass(frozen=True)
class AtomicsResult:
    cpu_rate: float           # updates/s, aggregate over CPU threads
    gpu_rate: float           # updates/s, aggregate over GPU threads
    collision_probability: float


def collision_rate(concurrent_ops: int, array_len: int) -> float:
    """Probability that some peer targets the same element concurrently."""
    if concurrent_ops < 1:
        raise InvalidWorkload("concurrent_ops must be >= 1")
    if array_len < 1:
        raise InvalidWorkload("array_len must be >= 1")
    return 1.0 - (1.0 - 1.0 / array_len) ** (concurrent_ops - 1)


def _validate(w: AtomicsWorkload):
    if w.cpu_threads < 0 or w.gpu_threads < 0:
        raise InvalidWorkload("thread counts must be non-negative")
    if w.cpu_threads + w.gpu_threads < 1:
        raise InvalidWorkload("need at least one thread")
    if w.gpu_threads % 64 != 0:
        raise InvalidWorkload("gpu_threads must be a multiple of 64")
    if w.array_len < 1:
        raise InvalidWorkload("array_len must be >= 1")
    if not isinstance(w.dtype, Dtype):
        raise InvalidWorkload(f"bad dtype {w.dtype!r}")


def _cpu_residency(profile: MachineProfile, array_bytes: int) -> float:
    a = profile.atomics
    if array_bytes <= profile.cpu.l1_capacity:
        return 1.0
    if array_bytes <= a.cpu_l2_span:
        return a.cpu_l2_cost_factor
    return a.cpu_mem_cost_factor


def _gpu_residency(profile: MachineProfile, array_bytes: int) -> float:
    a = profile.atomics
    if array_bytes <= a.gpu_l2_span:
        return 1.0
    return a.gpu_mem_cost_factor


def throughput(profile: MachineProfile, w: AtomicsWorkload) -> AtomicsResult:
    """Aggregate update rates of both agents for one workload point."""
    _validate(w)
    a = profile.atomics
    n = w.array_len
    array_bytes = n * w.dtype.element_bytes
    gpu_eff = min(w.gpu_threads, a.gpu_atomic_width)
    total = w.cpu_threads + gpu_eff
    p = collision_rate(total, n) if total >= 1 else 0.0

    cpu_rate = 0.0
    if w.cpu_threads:
        colliders = (w.cpu_threads - 1 + gpu_eff) / n
        if w.dtype is Dtype.UINT64:
            base = a.cpu_native_rate
            cost = 1.0 + a.contention_alpha * colliders
        else:
            base = a.cpu_cas_rate
            retries = min(1.0 / (1.0 - p) if p < 1.0 else a.cas_retry_cap,
                          a.cas_retry_cap)
            cost = 1.0 + a.cas_beta * colliders * retries
        if w.gpu_threads:
            cost *= 1.0 + a.hybrid_gamma
        cost *= _cpu_residency(profile, array_bytes)
        cpu_rate = w.cpu_threads * base / cost

    gpu_rate = 0.0
    if w.gpu_threads:
        colliders = (gpu_eff - 1 + w.cpu_threads) / n
        cost = 1.0 + a.gpu_contention_alpha * colliders
        cost *= _gpu_residency(profile, array_bytes)
        gpu_rate = gpu_eff * a.gpu_unit_rate / cost

    return AtomicsResult(cpu_rate=cpu_rate, gpu_rate=gpu_rate,
                         collision_probability=p)
