"""
Table lookup against one LP per trajectory
==========================================

Generating a member trajectory from the partition is a point location and
two small matrix products. The alternative is one LP solve per trajectory.
The partition costs something up front, so there is a batch size above which
it pays off.
"""
from vtube.bench import run_bench
from vtube.pipeline import bundled_scenario, plan_scenario

tube, _ = plan_scenario(bundled_scenario("desk"))
report = run_bench(tube, ks=(10, 30, 100, 300, 1000), epsilons=(0.8, 1.8))

# %%
print(f"{'eps':>4} {'k':>5} {'generate/traj':>14} {'LP/traj':>10} {'ratio':>6}")
for r in report.rows:
    print(f"{r.eps:4.1f} {r.k:5d} {r.gen_per_traj_s:14.2e} {r.lp_per_traj_s:10.2e} "
          f"{r.lp_per_traj_s / r.gen_per_traj_s:6.1f}")

# %%
# Linear fits and the two break-even estimates (operation count and measured).
print()
print(report.summary())
