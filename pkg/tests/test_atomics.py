import numpy as np
import pytest

from upm_sim.atomics import (AtomicsWorkload, Dtype, InvalidWorkload,
                             collision_rate, throughput)
from upm_sim.machine import builtin_mi300a


@pytest.fixture(scope="module")
def profile():
    return builtin_mi300a()


def rate(profile, n, dtype, cpu, gpu):
    return throughput(profile, AtomicsWorkload(cpu, gpu, n, dtype))


def test_collision_no_peers():
    assert collision_rate(1, 1) == 0.0
    assert collision_rate(1, 10**9) == 0.0


def test_collision_single_element_certain():
    for k in (2, 3, 24, 1000):
        assert collision_rate(k, 1) == 1.0


def test_collision_against_monte_carlo():
    rng = np.random.default_rng(99)
    k, n, trials = 24, 1024, 10**6
    draws = rng.integers(0, n, size=(trials, k))
    mine = draws[:, 0][:, None]
    hits = (draws[:, 1:] == mine).any(axis=1).mean()
    assert collision_rate(k, n) == pytest.approx(float(hits), rel=0.01)


def test_invalid_workloads(profile):
    with pytest.raises(InvalidWorkload):
        collision_rate(0, 4)
    with pytest.raises(InvalidWorkload):
        throughput(profile, AtomicsWorkload(0, 0, 16))
    with pytest.raises(InvalidWorkload):
        throughput(profile, AtomicsWorkload(1, 63, 16))
    with pytest.raises(InvalidWorkload):
        throughput(profile, AtomicsWorkload(1, 0, 0))


def test_cpu_integer_three_times_faster_at_low_contention(profile):
    uint = rate(profile, 1 << 20, Dtype.UINT64, 1, 0).cpu_rate
    fp = rate(profile, 1 << 20, Dtype.FP64, 1, 0).cpu_rate
    assert uint / fp == pytest.approx(3.0, rel=0.15)


def test_gpu_rate_identical_for_both_dtypes(profile):
    for n in (1, 1 << 10, 1 << 20, 1 << 30):
        for g in (64, 3328, 13312):
            u = rate(profile, n, Dtype.UINT64, 0, g).gpu_rate
            f = rate(profile, n, Dtype.FP64, 0, g).gpu_rate
            assert u == f


def test_single_element_cpu_rate_strictly_decreasing(profile):
    rates = [rate(profile, 1, Dtype.UINT64, c, 0).cpu_rate
             for c in range(1, 25)]
    assert all(a > b for a, b in zip(rates[1:], rates[2:]))
    assert rates[0] > rates[1]


def test_mid_array_rates_scale_up_with_threads(profile):
    for dtype in Dtype:
        cpu_rates = [rate(profile, 1 << 20, dtype, c, 0).cpu_rate
                     for c in (1, 2, 6, 12, 24)]
        assert all(a < b for a, b in zip(cpu_rates, cpu_rates[1:]))
    gpu_rates = [rate(profile, 1 << 20, Dtype.FP64, 0, g).gpu_rate
                 for g in (64, 320, 1280)]
    assert all(a < b for a, b in zip(gpu_rates, gpu_rates[1:]))


def test_gpu_rate_saturates_at_unit_width(profile):
    width = profile.atomics.gpu_atomic_width
    below = rate(profile, 1 << 20, Dtype.UINT64, 0, 1024).gpu_rate
    at = rate(profile, 1 << 20, Dtype.UINT64, 0, width).gpu_rate
    beyond = rate(profile, 1 << 20, Dtype.UINT64, 0, width * 4).gpu_rate
    assert below < at
    assert beyond == at


def test_l2_resident_array_faster_than_memory_resident(profile):
    for dtype in Dtype:
        mid = rate(profile, 1 << 20, dtype, 12, 0).cpu_rate
        big = rate(profile, 1 << 30, dtype, 12, 0).cpu_rate
        assert mid > big
    gmid = rate(profile, 1 << 20, Dtype.UINT64, 0, 3328).gpu_rate
    gbig = rate(profile, 1 << 30, Dtype.UINT64, 0, 3328).gpu_rate
    assert gmid > gbig


def test_hybrid_cpu_window_small_array(profile):
    for c in range(1, 25):
        iso = rate(profile, 1 << 10, Dtype.UINT64, c, 0).cpu_rate
        hyb = rate(profile, 1 << 10, Dtype.UINT64, c, 3328).cpu_rate
        assert 0.11 <= hyb / iso <= 0.25


def test_hybrid_gpu_floor(profile):
    for n in (1 << 10, 1 << 20):
        for dtype in Dtype:
            for c in (1, 6, 12, 24):
                for g in (64, 1280, 3328, 13312):
                    iso = rate(profile, n, dtype, 0, g).gpu_rate
                    hyb = rate(profile, n, dtype, c, g).gpu_rate
                    assert hyb / iso >= 0.79


def test_hybrid_gpu_geomean_mid_array(profile):
    ratios = []
    for c in (1, 2, 3, 6, 12, 24):
        for g in (64, 320, 1280, 3328, 6400, 13312):
            iso = rate(profile, 1 << 20, Dtype.UINT64, 0, g).gpu_rate
            hyb = rate(profile, 1 << 20, Dtype.UINT64, c, g).gpu_rate
            ratios.append(hyb / iso)
    geomean = float(np.exp(np.mean(np.log(ratios))))
    assert 0.99 <= geomean <= 1.03


def test_collision_probability_reported(profile):
    res = rate(profile, 1 << 10, Dtype.UINT64, 12, 3328)
    width = profile.atomics.gpu_atomic_width
    expect = collision_rate(12 + min(3328, width), 1 << 10)
    assert res.collision_probability == pytest.approx(expect)
