"""
The optimal-time surface and its simplex partition
==================================================

For weights on the simplex, the shortest feasible flight time of the member
trajectory is a convex, piecewise-linear function. This script samples it,
checks convexity along a segment, and shows how the partition refines as the
tolerance shrinks.
"""
import numpy as np

from vtube.partition import partition
from vtube.pipeline import bundled_scenario, plan_scenario
from vtube.temporal import parametric_from_spatial, value_function

tube, _ = plan_scenario(bundled_scenario("desk"))
plp = parametric_from_spatial(tube.spatial, tube.v_max)

# %%
# Optimal times at the simplex vertices are the boundary trajectories' times.
for k in range(plp.k_c):
    print(f"vertex {k}: {value_function(plp, np.eye(plp.k_c)[k])[0]:.4f} s")

# %%
# Walk along the edge from vertex 0 to vertex 1. The chord always lies above
# the curve.
print("\n s      optimal   chord")
a, b = np.eye(3)[0], np.eye(3)[1]
va, vb = value_function(plp, a)[0], value_function(plp, b)[0]
for s in np.linspace(0, 1, 11):
    v = value_function(plp, (1 - s) * a + s * b)[0]
    print(f"{s:4.1f}  {v:8.4f}  {(1 - s) * va + s * vb:8.4f}")

# %%
# Tighter tolerances need more regions. The surface here is made of a few
# exactly linear pieces, so the count stops growing once every piece has its
# own region.
for eps in (4.0, 1.8, 0.8, 0.1, 0.01):
    tree = partition(plp, eps)
    worst = max(leaf.max_error for leaf in tree.leaves())
    print(f"eps {eps:5.2f}: {tree.n_leaves:2d} regions, worst leaf error {worst:.2e} s, "
          f"{tree.lp_solves} LP solves")

# %%
# Spot-check the bound on random weights.
tree = partition(plp, 0.8)
rng = np.random.default_rng(1)
gaps = [float(np.sum(tree.evaluate(th))) - value_function(plp, th)[0]
        for th in rng.dirichlet(np.ones(3), size=300)]
print(f"\napproximation gap over 300 samples: min {min(gaps):.2e}, max {max(gaps):.4f} s")
