"""
Replanning around a wall that is not on the map
===============================================

The planner first assumes free space behind the known obstacles. Segments
within sensing range of the leading robot are committed; once the wall is
sensed, the tube is replanned from the end of the committed part while the
committed part itself stays fixed.
"""
from vtube.pipeline import bundled_scenario
from vtube.sim import replan_loop

scenario = bundled_scenario("unknown_wall")
result = replan_loop(scenario)

# %%
# Event log: initial plan, sensing, commits, replans and leader handovers.
for event in result.log.events:
    print(event)

# %%
# Each stage is one planned tube; earlier stages keep their committed prefix.
for n, stage in enumerate(result.stages):
    print(f"stage {n}: from step {stage.start_step}, {stage.tube.n_segments} segments, "
          f"{stage.committed} committed")
print("committed prefixes unchanged:", result.verify_prefixes())

summary = result.log.summary()
print(f"\nflight {summary['flight_time']:.2f} s, closest pair "
      f"{summary['min_inter_robot_distance']:.3f} m, closest obstacle "
      f"{summary['min_obstacle_distance']:.3f} m")
