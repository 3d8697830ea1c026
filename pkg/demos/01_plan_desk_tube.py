"""
Planning a virtual tube through the desk world
==============================================

The desk world is a 22 x 12 x 6 m room with one block standing on the floor.
Robots start near x = 2.5 and must reach the mirror-image triangle near
x = 19.5. This script walks through each planning stage and then queries a
few members of the finished tube.
"""
import numpy as np

from vtube.pipeline import bundled_scenario, plan_scenario
from vtube.temporal import parametric_from_spatial, value_function

# %%
# Load the bundled scenario and run the whole pipeline. The report records
# how long each stage took.
scenario = bundled_scenario("desk")
tube, report = plan_scenario(scenario)
print(report.summary())

# %%
# The corridor is a chain of overlapping spheres. Consecutive spheres meet in
# a disk; the boundary trajectories pass through those disks.
corr = tube.corridor
for m, (c, r) in enumerate(zip(corr.centers, corr.radii)):
    print(f"sphere {m}: center {np.round(c, 2)}, radius {r:.2f} m")

# %%
# Each boundary trajectory solves its own minimum-jerk problem on the shared
# initial timing. Any convex combination of their control points stays inside
# the corridor, because each segment's control points sit in a sphere.
sp = tube.spatial
print("\nboundary jerk objectives:", np.round(sp.objectives, 4))
print("initial segment durations:", np.round(sp.durations, 3))

# %%
# Time allocation is a small LP. Its optimal value over the weight simplex is
# convex and is approximated by a tree of critical regions.
plp = parametric_from_spatial(sp, tube.v_max)
print(f"\n{tube.n_leaves} critical regions, tree depth {tube.tree.depth}, eps = {tube.eps} s")

# %%
# A member trajectory is addressed by barycentric weights. Its durations come
# from a table lookup; compare them with a direct LP solve.
rng = np.random.default_rng(0)
for theta in rng.dirichlet(np.ones(tube.k_c), size=4):
    traj = tube.trajectory(theta)
    exact, _ = value_function(plp, theta)
    start, end = traj(0.0), traj(traj.total_time)
    print(f"theta {np.round(theta, 3)}: {traj.total_time:7.3f} s "
          f"(optimal {exact:7.3f} s), start {np.round(start, 2)} -> end {np.round(end, 2)}")
