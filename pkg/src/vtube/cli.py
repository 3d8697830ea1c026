"""Command line entry point: ``vtube plan|generate|simulate|bench|inspect``.

Exit codes: 0 success, 2 usage or schema error, 3 infeasible planning or
replanning, 4 artifact integrity failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import tube as tube_io
from .bench import run_bench
from .corridor import ObstacleMap
from .errors import (
    AssignmentError,
    BudgetError,
    ConfigurationError,
    DomainError,
    FeasibilityHoleError,
    IntegrityError,
    LPInfeasibleError,
    PlanningError,
    ReplanError,
    ScenarioError,
    SpatialInfeasibleError,
    VTubeError,
)
from .pipeline import (
    bundled_scenario,
    bundled_scenario_names,
    load_scenario,
    plan_scenario,
    start_positions,
)
from .sim import SimConfig, make_robots, replan_loop, simulate

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_INTEGRITY = 0, 1, 2, 3, 4

_INFEASIBLE = (PlanningError, SpatialInfeasibleError, LPInfeasibleError, ReplanError,
               FeasibilityHoleError, BudgetError, AssignmentError)
_USAGE = (ScenarioError, ConfigurationError, DomainError)


class UsageError(Exception):
    pass


def _scenario(ref):
    """A scenario file path, or the name of a bundled scenario."""
    if os.path.exists(ref):
        return load_scenario(ref)
    if ref in bundled_scenario_names():
        return bundled_scenario(ref)
    raise UsageError(f"scenario '{ref}' is neither a file nor a bundled scenario "
                     f"({', '.join(bundled_scenario_names())})")


def _artifact(path):
    if not os.path.exists(path):
        raise UsageError(f"tube artifact '{path}' does not exist")
    return tube_io.load(path)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got '{text}'") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got '{text}'") from None


def _emit(text, out=None):
    print(text)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_plan(args):
    sc = _scenario(args.scenario)
    if args.seed is not None:
        sc = sc.with_planner(seed=args.seed)
    tube, report = plan_scenario(sc, eps=args.epsilon)
    out = args.out or f"{sc.name}.tube.json"
    tube_io.save(tube, out)
    text = f"scenario           : {args.scenario}\nepsilon            : {tube.eps:g}\n"
    text += report.summary() + f"\nartifact           : {out}"
    _emit(text, os.path.splitext(out)[0] + ".summary.txt")
    return EXIT_OK


def _batch_rows(cps, dts, thetas):
    k, M, p1, n = cps.shape
    head = ["traj", *[f"theta_{i}" for i in range(thetas.shape[1])], "total_time",
            "segment", "duration"]
    head += [f"p{j}_{ax}" for j in range(p1) for ax in "xyz"[:n]]
    yield head
    for i in range(k):
        total = repr(float(dts[i].sum()))
        th = [repr(float(v)) for v in thetas[i]]
        for m in range(M):
            yield [i, *th, total, m, repr(float(dts[i, m])),
                   *[repr(float(v)) for v in cps[i, m].reshape(-1)]]


def cmd_generate(args):
    tube = _artifact(args.artifact)
    if args.theta:
        theta = np.array(_floats(args.theta))
        if theta.size != tube.k_c:
            raise UsageError(f"--theta needs {tube.k_c} weights")
        thetas = np.repeat(theta[None], args.k, axis=0)
    else:
        rng = np.random.default_rng(args.seed or 0)
        thetas = rng.dirichlet(np.ones(tube.k_c), size=args.k)
    t0 = time.perf_counter()
    cps, dts = tube_io.generate(tube, thetas)
    wall = time.perf_counter() - t0
    out = args.out or "batch.csv"
    with open(out, "w", newline="") as fh:
        csv.writer(fh).writerows(_batch_rows(cps, dts, thetas))
    print(f"generated {args.k} trajectories in {wall:.6f} s "
          f"({wall / args.k * 1e6:.2f} us each) -> {out}")
    return EXIT_OK


def cmd_simulate(args):
    if not args.artifact and not args.scenario:
        raise UsageError("simulate needs a tube artifact or --scenario")
    sc = _scenario(args.scenario) if args.scenario else None
    if sc is not None and args.seed is not None:
        sc = sc.with_sim(seed=args.seed)
    if args.replan:
        if sc is None:
            raise UsageError("--replan needs --scenario (the map with unknown obstacles)")
        res = replan_loop(sc, robots=args.robots)
        log = res.log
        extra = {"stages": len(res.stages), "prefixes_intact": res.verify_prefixes()}
    else:
        sim = sc.sim if sc else None
        tube = _artifact(args.artifact) if args.artifact else plan_scenario(sc)[0]
        config = SimConfig.from_scenario(sim) if sim else SimConfig(seed=args.seed or 0)
        r_s = sim["r_s"] if sim else 0.4
        r_a = sim["r_a"] if sim else 1.0
        count = args.robots or (sim["robots"] if sim else 3)
        starts, _ = start_positions(tube, count, 2 * r_s + 0.2, config.seed)
        robots = make_robots(tube, starts, r_s, r_a)
        # without a scenario only the free world is known
        omap = sc.obstacle_map if sc else ObstacleMap((-1e6,) * tube.spatial.dim,
                                                       (1e6,) * tube.spatial.dim)
        log = simulate(tube, robots, config, omap, args.allocation)
        extra = {"allocation": args.allocation}
    out_dir = args.out or "sim_out"
    os.makedirs(out_dir, exist_ok=True)
    log.write_csv(os.path.join(out_dir, "log.csv"))
    log.write_summary(os.path.join(out_dir, "summary.json"))
    print(json.dumps({**log.summary(), **extra}, indent=2, default=float))
    return EXIT_OK


def cmd_bench(args):
    sc = _scenario(args.scenario)
    tube, _ = plan_scenario(sc)
    ks = _ints(args.k) if args.k else [10, 30, 100, 300, 1000]
    eps = _floats(args.epsilon) if args.epsilon else [0.8, 1.8]
    report = run_bench(tube, ks, eps, seed=args.seed or 0, repeats=args.repeats)
    out = args.out or "bench.csv"
    report.write_csv(out)
    print(report.summary() + f"\nreport -> {out}")
    return EXIT_OK


def cmd_inspect(args):
    tube = _artifact(args.artifact)
    print(json.dumps(tube.metadata(), indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="vtube", description="Optimal virtual tube planner")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a tube from a scenario")
    p.add_argument("--scenario", required=True, help="scenario file or bundled name")
    p.add_argument("--out", help="artifact path (default <name>.tube.json)")
    p.add_argument("--epsilon", type=float, help="override the error tolerance")
    p.add_argument("--seed", type=int, help="override the planner seed")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", help="sample trajectories from a tube artifact")
    p.add_argument("artifact")
    p.add_argument("--k", type=int, default=1, help="number of trajectories")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", help="force comma-separated weights for every trajectory")
    p.add_argument("--out", help="CSV path (default batch.csv)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="fly a swarm through a tube")
    p.add_argument("artifact", nargs="?")
    p.add_argument("--scenario")
    p.add_argument("--allocation", choices=["initial", "approx", "exact"], default="approx")
    p.add_argument("--replan", action="store_true", help="enable unknown-obstacle replanning")
    p.add_argument("--robots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default sim_out)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="time explicit generation against direct LPs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--k", help="comma-separated batch sizes")
    p.add_argument("--epsilon", help="comma-separated tolerances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", help="CSV path (default bench.csv)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print tube metadata")
    p.add_argument("artifact")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    where = f" (scenario {args.scenario})" if getattr(args, "scenario", None) else ""
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except _USAGE as exc:
        print(f"invalid input{where}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INFEASIBLE as exc:
        stage = getattr(exc, "stage", None)
        tag = f"stage {stage}" if stage else type(exc).__name__
        print(f"planning failed in {tag}{where}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except VTubeError as exc:
        print(f"error{where}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
