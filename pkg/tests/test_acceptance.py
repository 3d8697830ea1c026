"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``[PASS]`` / ``[FAIL]`` line with the measured figures
before asserting, so ``pytest -s`` or the captured output shows the verdicts.
"""
import time
import warnings

import numpy as np
import pytest

from oracles import collocation_qp, tableau_time_lp
from vtube.bench import run_bench
from vtube.bezier import PiecewiseBezier, derivative_control_points, sample
from vtube.corridor import init_time_allocation, select_boundary_terminals
from vtube.partition import partition
from vtube.pipeline import (
    bundled_scenario,
    derivative_bounds,
    plan_scenario,
    random_desk,
    start_positions,
)
from vtube.sim import SimConfig, make_robots, replan_loop, simulate
from vtube.spatial import SpatialProblem, combine, solve_boundary
from vtube.temporal import build_lp, solve_lp, value_function

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def report(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        assert ok, f"{criterion}: {detail}"
    return report


def swarm_run(scenario, tube, allocation):
    sim = scenario.sim
    cfg = SimConfig.from_scenario(sim)
    starts, _ = start_positions(tube, sim["robots"], 2 * sim["r_s"] + 0.2, cfg.seed)
    robots = make_robots(tube, starts, sim["r_s"], sim["r_a"])
    return simulate(tube, robots, cfg, scenario.obstacle_map, allocation).summary()


@pytest.fixture(scope="module")
def ablation_runs():
    runs = []
    for seed in range(5):
        sc = random_desk(seed)
        tube, _ = plan_scenario(sc)
        runs.append((seed, swarm_run(sc, tube, "approx"), swarm_run(sc, tube, "initial")))
    return runs


@pytest.fixture(scope="module")
def wall_result():
    return replan_loop(bundled_scenario("unknown_wall"))


def test_1_eps_soundness(desk_plp, verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    thetas = rng.dirichlet(np.ones(desk_plp.k_c), size=500)
    parts = []
    ok = True
    for eps in (0.1, 0.8):
        tree = partition(desk_plp, eps)
        gaps = np.array([float(np.sum(tree.evaluate(th))) - value_function(desk_plp, th)[0]
                         for th in thetas])
        ok &= bool(gaps.min() >= -1e-9 and gaps.max() <= 1.01 * eps)
        parts.append(f"eps={eps}: {tree.n_leaves} regions, gap in "
                     f"[{gaps.min():.2e}, {gaps.max():.4f}]")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60.0
    verdict("1 eps-soundness", ok, "; ".join(parts) + f"; {elapsed:.1f} s")


def test_2_vertex_exactness(desk, desk_tube, verdict):
    pl = desk.planner
    paths = select_boundary_terminals(desk_tube.corridor, desk.terminals, pl["k_c"], pl["rho"])
    dts = init_time_allocation(paths, pl["v_nominal"])
    prob = SpatialProblem(desk_tube.corridor, paths, dts, pl["p"], pl["d"],
                          derivative_bounds(pl["v_nominal"], dts, pl["d"]))
    worst_cp = worst_t = 0.0
    for k in range(desk_tube.k_c):
        direct = solve_boundary(prob, k).control_points
        times = solve_lp(build_lp(direct, pl["v_max"], pl["p"])).x
        traj = desk_tube.trajectory(np.eye(desk_tube.k_c)[k])
        worst_cp = max(worst_cp, float(np.abs(traj.control_points - direct).max()))
        worst_t = max(worst_t, float(np.abs(traj.durations - times).max()))
    ok = worst_cp <= 1e-9 and worst_t <= 1e-6
    verdict("2 vertex exactness", ok,
            f"control points {worst_cp:.1e} (tol 1e-9), durations {worst_t:.1e} (tol 1e-6)")


def test_3_convexity(desk_plp, verdict):
    rng = np.random.default_rng(7)
    worst = -np.inf
    for _ in range(100):
        a, b = rng.dirichlet(np.ones(desk_plp.k_c), size=2)
        mid = value_function(desk_plp, (a + b) / 2)[0]
        mean = (value_function(desk_plp, a)[0] + value_function(desk_plp, b)[0]) / 2
        worst = max(worst, mid - mean)
    verdict("3 convexity of V*", worst <= 1e-7,
            f"max V(mid) - mean over 100 pairs = {worst:.2e} (tol 1e-7)")


def test_4_complexity(desk_tube, verdict):
    report = run_bench(desk_tube, ks=(10, 30, 100, 300, 1000), epsilons=(0.8, 1.8), repeats=3)
    parts = []
    ok = True
    for eps in (0.8, 1.8):
        row = [r for r in report.for_eps(eps) if r.k == 1000][0]
        ratio = row.lp_per_traj_s / row.gen_per_traj_s
        r2 = report.generation_fit[eps].r2
        ok &= ratio >= 10.0 and r2 > 0.95
        parts.append(f"eps={eps}: LP/generation per trajectory at k=1000 = {ratio:.1f}x, "
                     f"generation R2 = {r2:.4f}")
    verdict("4 complexity", ok, "; ".join(parts))


def test_5_ablation(ablation_runs, verdict):
    faster = sum(a["flight_time"] <= i["flight_time"] for _, a, i in ablation_runs)
    quicker = sum(a["mean_speed"] > i["mean_speed"] for _, a, i in ablation_runs)
    rows = ", ".join(f"seed {s}: {a['flight_time']:.2f}/{i['flight_time']:.2f} s"
                     for s, a, i in ablation_runs)
    ok = faster >= 4 and quicker >= 4
    verdict("5 ablation", ok, f"approx flight time <= initial in {faster}/5, mean speed higher "
            f"in {quicker}/5 (approx/initial {rows})")


def test_6_safety(desk, desk_tube, ablation_runs, wall_result, verdict):
    summaries = [("desk approx", swarm_run(desk, desk_tube, "approx")),
                 ("desk initial", swarm_run(desk, desk_tube, "initial"))]
    for seed, a, i in ablation_runs:
        summaries += [(f"random_desk_{seed} approx", a), (f"random_desk_{seed} initial", i)]
    summaries.append(("unknown_wall replan", wall_result.log.summary()))
    pair = min(s["min_inter_robot_distance"] for _, s in summaries)
    clear = min(s["min_obstacle_distance"] for _, s in summaries)
    done = all(s["completed"] for _, s in summaries)
    ok = pair >= 0.79 and clear >= 0.39 and done
    verdict("6 safety", ok, f"{len(summaries)} runs, min inter-robot {pair:.3f} m (>= 0.79), "
            f"min obstacle clearance {clear:.3f} m (>= 0.39), all arrived: {done}")


def test_7_invariant_suite(desk, desk_tube, desk_plp, verdict):
    sp = desk_tube.spatial
    corr = desk_tube.corridor
    rng = np.random.default_rng(11)
    thetas = np.vstack([np.eye(sp.k_c), rng.dirichlet(np.ones(sp.k_c), size=5)])
    u = np.linspace(0.0, 1.0, 1000)
    hull = cont = speed = 0.0
    v = np.broadcast_to(np.asarray(desk_tube.v_max, float), (sp.dim,))
    for th in thetas:
        P = combine(sp, th)
        for m in range(sp.n_segments):
            pts = sample(PiecewiseBezier(P[m:m + 1], [1.0]), u)
            hull = max(hull, float((np.linalg.norm(pts - corr.centers[m], axis=1)
                                    - corr.radii[m]).max()))
        for r in range(sp.d):
            for m in range(sp.n_segments - 1):
                a = derivative_control_points(P[m], sp.durations[m], r)[-1]
                b = derivative_control_points(P[m + 1], sp.durations[m + 1], r)[0]
                cont = max(cont, float(np.abs(a - b).max()))
        retimed = desk_tube.trajectory(th)
        vel = sample(retimed, np.linspace(0, retimed.total_time, 1000), order=1)
        speed = max(speed, float((np.abs(vel) - v).max()))

    pl = desk.planner
    paths = select_boundary_terminals(corr, desk.terminals, pl["k_c"], pl["rho"])
    dts = init_time_allocation(paths, pl["v_nominal"])
    bounds = derivative_bounds(pl["v_nominal"], dts, pl["d"])
    colloc = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(sp.k_c):
            val, _ = collocation_qp(corr, paths[k], dts, pl["p"], pl["d"], bounds)
            colloc = max(colloc, abs(val - sp.objectives[k]) / abs(val))

    lp_gap = 0.0
    for th in np.vstack([np.eye(sp.k_c), rng.dirichlet(np.ones(sp.k_c), size=30)]):
        lp = desk_plp.at(th)
        lp_gap = max(lp_gap, abs(solve_lp(lp).value - tableau_time_lp(lp)[1]))

    checks = {
        "hull containment": (hull <= 1e-9, f"{hull:.1e} m past sphere (tol 1e-9)"),
        "C^(d-1) joints": (cont <= 1e-6, f"{cont:.1e} (tol 1e-6)"),
        "retimed speed": (speed <= 1e-6, f"{speed:.1e} m/s over v_max (tol 1e-6)"),
        "collocation QP": (colloc <= 1e-6, f"rel {colloc:.1e} (tol 1e-6)"),
        "tableau LP": (lp_gap <= 1e-7, f"{lp_gap:.1e} s (tol 1e-7)"),
    }
    ok = all(c[0] for c in checks.values())
    verdict("7 invariant suite", ok, "; ".join(f"{k} {v[1]}" for k, v in checks.items()))


def test_8_replanning(wall_result, verdict):
    log = wall_result.log
    pts = log.positions.reshape(-1, log.positions.shape[2])
    revealed = wall_result.revealed_map
    clear = float(revealed.clearance(pts).min())
    ok = (log.replan_count >= 1 and wall_result.verify_prefixes() and clear > 0.0
          and not log.timed_out)
    verdict("8 replanning", ok,
            f"{log.replan_count} replan(s), {len(wall_result.stages)} stages, prefixes intact: "
            f"{wall_result.verify_prefixes()}, {len(revealed.obstacles)} obstacle(s) on the revealed map, "
            f"min clearance of logged positions {clear:.3f} m")
