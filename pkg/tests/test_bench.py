import time

import numpy as np
import pytest

from vtube.bench import (
    MIN_REPEATS,
    empirical_crossover,
    linear_fit,
    run_bench,
    theoretical_crossover,
    timed,
)
from vtube.errors import ConfigurationError


def test_linear_fit_exact_line():
    fit = linear_fit([1, 2, 3, 4], [3.0, 5.0, 7.0, 9.0])
    assert fit.slope == pytest.approx(2.0) and fit.intercept == pytest.approx(1.0)
    assert fit.r2 == pytest.approx(1.0)


def test_linear_fit_noise_lowers_r2():
    fit = linear_fit([1, 2, 3, 4], [1.0, 3.0, 1.0, 3.0])
    assert fit.r2 < 0.5


def test_theoretical_crossover():
    # lambda (n_t + k_c)^3 / (n_t^3 - n_t) with 5 regions, 8 segments, 3 boundaries
    assert theoretical_crossover(5, 8, 3) == pytest.approx(5 * 11**3 / (512 - 8))
    assert theoretical_crossover(1, 1, 3) == float("inf")


def test_empirical_crossover():
    assert empirical_crossover(0.2, 1e-4, 2.1e-3) == pytest.approx(100.0)
    assert empirical_crossover(0.2, 1e-3, 1e-3) == float("inf")


def test_timed_median_and_repeat_floor():
    t = timed(lambda: time.sleep(0.002), repeats=3)
    assert 0.0015 <= t <= 0.05
    with pytest.raises(ConfigurationError):
        timed(lambda: None, repeats=MIN_REPEATS - 1)


def test_timed_loops_fast_calls():
    calls = []
    per_call = timed(lambda: calls.append(1), repeats=3)
    assert len(calls) > 3
    assert per_call < 1e-3


def test_run_bench_small(desk_tube):
    report = run_bench(desk_tube, ks=(5, 10, 20), epsilons=(1.8, 0.8), repeats=3)
    assert len(report.rows) == 6
    coarse, fine = report.for_eps(1.8)[0], report.for_eps(0.8)[0]
    assert fine.n_leaves >= coarse.n_leaves
    for r in report.rows:
        assert r.gen_per_traj_s < r.lp_per_traj_s
        assert r.n_t == 8 and r.k_c == 3
    assert "regions" in report.summary()


def test_run_bench_rejects_empty(desk_tube):
    with pytest.raises(ConfigurationError):
        run_bench(desk_tube, ks=())
