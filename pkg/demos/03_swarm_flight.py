"""
Flying a small swarm through the tube
=====================================

Three robots start at separated points of the start triangle, each tracking
its own member trajectory with a feedforward plus proportional controller and
pairwise repulsion. The same flight is repeated with the shared initial
timing to show what the time-allocation step buys.
"""
from vtube.pipeline import bundled_scenario, plan_scenario, random_desk, start_positions
from vtube.sim import SimConfig, make_robots, simulate


def fly(scenario, tube, allocation):
    sim = scenario.sim
    cfg = SimConfig.from_scenario(sim)
    starts, _ = start_positions(tube, sim["robots"], 2 * sim["r_s"] + 0.2, cfg.seed)
    robots = make_robots(tube, starts, sim["r_s"], sim["r_a"])
    return simulate(tube, robots, cfg, scenario.obstacle_map, allocation).summary()


# %%
# Desk world, both timings.
desk = bundled_scenario("desk")
tube, _ = plan_scenario(desk)
for allocation in ("approx", "initial"):
    s = fly(desk, tube, allocation)
    print(f"{allocation:8s}: flight {s['flight_time']:6.2f} s, mean speed {s['mean_speed']:.3f} m/s, "
          f"closest pair {s['min_inter_robot_distance']:.3f} m, "
          f"closest obstacle {s['min_obstacle_distance']:.3f} m")

# %%
# Five seeded random desks: one block of random position and width, with the
# gap on a random side.
print("\nseed  approx  initial  (flight time, s)")
for seed in range(5):
    sc = random_desk(seed)
    t, _ = plan_scenario(sc)
    a, i = fly(sc, t, "approx"), fly(sc, t, "initial")
    print(f"{seed:4d}  {a['flight_time']:6.2f}  {i['flight_time']:7.2f}")
