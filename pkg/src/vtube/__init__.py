"""Optimal virtual tubes for robot swarms.

A tube is a family of trajectories obtained by convex combination of a few
boundary trajectories through a sphere corridor. Segment durations for any
member come from a piecewise-affine approximation of the time-allocation LP,
so generating a trajectory costs a table lookup and a matrix product.
"""
from .bezier import BezierSegment, PiecewiseBezier, eval_trajectory, sample
from .corridor import ObstacleMap, SphereCorridor, Terminals, plan_corridor
from .errors import VTubeError

__version__ = "0.1.0"
