"""Benchmark: explicit (tree lookup) generation against a direct LP per trajectory.

For every tolerance the partition is built once and then, for each batch
size ``k``, three quantities are timed on the same seeded weights: the
affine generation of the batch, and one direct LP solve per weight. Times
come from ``time.perf_counter`` and every figure is the median of at least
three repetitions.
"""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError
from .partition import partition
from .temporal import parametric_from_spatial, solve_lp
from .tube import build_tube, generate

MIN_REPEATS = 3
# a timed block shorter than this many clock ticks is repeated in a loop
MIN_TICKS = 1000

COLUMNS = [
    "eps", "n_leaves", "k", "n_t", "k_c", "partition_s", "gen_total_s", "gen_per_traj_s",
    "lp_total_s", "lp_per_traj_s", "crossover_theory", "crossover_empirical",
]


@dataclass
class BenchRow:
    eps: float
    n_leaves: int
    k: int
    n_t: int
    k_c: int
    partition_s: float
    gen_total_s: float
    gen_per_traj_s: float
    lp_total_s: float
    lp_per_traj_s: float
    crossover_theory: float
    crossover_empirical: float


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    generation_fit: dict = field(default_factory=dict)  # eps -> LinearFit
    lp_fit: dict = field(default_factory=dict)
    repeats: int = MIN_REPEATS

    def for_eps(self, eps):
        return [r for r in self.rows if r.eps == eps]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows:
                d = asdict(r)
                w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in COLUMNS])

    def summary(self):
        lines = []
        for eps in sorted(self.generation_fit):
            rows = self.for_eps(eps)
            g, l = self.generation_fit[eps], self.lp_fit[eps]
            lines.append(
                f"eps={eps:g}: {rows[0].n_leaves} regions, partition {rows[0].partition_s:.3f} s, "
                f"generation slope {g.slope:.3g} s/traj (R2 {g.r2:.4f}), "
                f"direct LP slope {l.slope:.3g} s/traj, "
                f"crossover theory {rows[0].crossover_theory:.3g}, "
                f"empirical {rows[0].crossover_empirical:.3g}"
            )
        return "\n".join(lines)


def _timer_resolution():
    return time.get_clock_info("perf_counter").resolution


def timed(fn, repeats=MIN_REPEATS):
    """Median wall time of ``fn()`` over ``repeats`` runs.

    Runs that are too short for the clock are looped, doubling the loop count
    until a block spans ``MIN_TICKS`` ticks; the per-call time is reported.
    """
    if repeats < MIN_REPEATS:
        raise ConfigurationError(f"need at least {MIN_REPEATS} repetitions")
    floor = MIN_TICKS * _timer_resolution()
    loops = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        if time.perf_counter() - t0 >= floor or loops >= 1 << 20:
            break
        loops *= 2
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        samples.append((time.perf_counter() - t0) / loops)
    return statistics.median(samples)


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(coef[0]), float(coef[1]), r2)


def theoretical_crossover(n_leaves, n_t, k_c):
    """Batch size above which the explicit method needs fewer operations."""
    if n_t < 2:
        return float("inf")
    return n_leaves * (n_t + k_c) ** 3 / (n_t**3 - n_t)


def empirical_crossover(partition_s, gen_per, lp_per):
    """Batch size where partition plus generation matches the direct solves."""
    if lp_per <= gen_per:
        return float("inf")
    return partition_s / (lp_per - gen_per)


def run_bench(tube, ks=(10, 30, 100, 300, 1000), epsilons=(0.8, 1.8), seed=0,
              repeats=MIN_REPEATS, max_depth=20) -> BenchReport:
    """Time partition, batch generation and direct LP solves for a planned tube.

    The spatial solution of ``tube`` is reused; only the partition is rebuilt
    for each tolerance.
    """
    ks = sorted(int(k) for k in ks)
    if not ks or ks[0] < 1:
        raise ConfigurationError("batch sizes must be positive")
    plp = parametric_from_spatial(tube.spatial, tube.v_max)
    rng = np.random.default_rng(seed)
    thetas = rng.dirichlet(np.ones(tube.k_c), size=ks[-1])
    report = BenchReport(repeats=repeats)
    for eps in epsilons:
        holder = {}

        def build():
            holder["tree"] = partition(plp, eps, max_depth)

        part_s = timed(build, repeats)
        tree = holder["tree"]
        t = build_tube(tube.corridor, tube.spatial, tree, tube.terminals, tube.v_max)
        rows = []
        for k in ks:
            batch = thetas[:k]
            gen = timed(lambda: generate(t, batch), repeats)
            lp = timed(lambda: [solve_lp(plp.at(th)) for th in batch], repeats)
            rows.append((k, gen, lp))
        g_fit = linear_fit([r[0] for r in rows], [r[1] for r in rows])
        l_fit = linear_fit([r[0] for r in rows], [r[2] for r in rows])
        report.generation_fit[eps] = g_fit
        report.lp_fit[eps] = l_fit
        k_theory = theoretical_crossover(tree.n_leaves, tree.n_t, tree.k_c)
        k_emp = empirical_crossover(part_s, g_fit.slope, l_fit.slope)
        for k, gen, lp in rows:
            report.rows.append(BenchRow(
                float(eps), tree.n_leaves, k, tree.n_t, tree.k_c, part_s, gen, gen / k,
                lp, lp / k, k_theory, k_emp,
            ))
    return report
