"""The optimal virtual tube: spatial boundary solutions plus explicit timing.

Every member trajectory is identified by barycentric weights ``theta``. Its
control points are the ``theta``-combination of the boundary control points
and its segment durations come from the critical-region tree, so a query is
a point location followed by two small matrix products.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .bezier import PiecewiseBezier
from .corridor import SphereCorridor, Terminals
from .errors import AssemblyError, AssignmentError, DomainError, IntegrityError
from .partition import CriticalRegionTree, eval_optimizer
from .spatial import SpatialSolution, check_weights

ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class CrossSection:
    """Boundary samples at a common segment parameter.

    ``fraction`` is measured along the shared initial allocation; ``points``
    holds one sample per boundary trajectory. The member with weights
    ``theta`` passes through ``theta @ points`` at the same segment parameter.
    """

    fraction: float
    segment: int
    u: float
    points: np.ndarray

    def member(self, theta):
        return np.asarray(theta, float) @ self.points

    def contains(self, point, tol=1e-6):
        """Whether ``point`` lies in the convex hull of the boundary samples."""
        try:
            _solve_weights(self.points, point, tol)
        except AssignmentError:
            return False
        return True


@dataclass(frozen=True)
class VirtualTube:
    terminals: Terminals
    corridor: SphereCorridor
    spatial: SpatialSolution
    tree: CriticalRegionTree
    v_max: tuple = ()

    @property
    def k_c(self):
        return self.spatial.k_c

    @property
    def n_segments(self):
        return self.spatial.n_segments

    @property
    def n_t(self):
        return self.tree.n_t

    @property
    def n_leaves(self):
        return self.tree.n_leaves

    @property
    def eps(self):
        return self.tree.eps

    @property
    def boundary_starts(self):
        return self.spatial.control_points[:, 0, 0, :]

    def durations(self, theta):
        theta = check_weights(theta, self.k_c)
        return eval_optimizer(self.tree.locate(theta), theta)

    def trajectory(self, theta) -> PiecewiseBezier:
        return trajectory(self, theta)

    def metadata(self):
        return {
            "k_c": self.k_c,
            "n_segments": self.n_segments,
            "n_t": self.n_t,
            "dim": self.spatial.dim,
            "degree": self.spatial.degree,
            "eps": self.eps,
            "n_leaves": self.n_leaves,
            "tree_depth": self.tree.depth,
            "boundary_times": [float(v) for v in self.tree.root.values],
        }

    def to_dict(self):
        return {
            "version": ARTIFACT_VERSION,
            "terminals": {
                "c0": self.terminals.c0.tolist(),
                "c1": self.terminals.c1.tolist(),
                "A": self.terminals.A.tolist(),
                "b": self.terminals.b.tolist(),
            },
            "corridor": self.corridor.to_dict(),
            "spatial": {
                "control_points": self.spatial.control_points.tolist(),
                "durations": self.spatial.durations.tolist(),
                "objectives": self.spatial.objectives.tolist(),
                "kkt_residuals": np.asarray(self.spatial.kkt_residuals, float).tolist(),
                "d": self.spatial.d,
            },
            "tree": self.tree.to_dict(),
            "v_max": list(self.v_max),
        }


def build_tube(corridor: SphereCorridor, spatial: SpatialSolution, tree: CriticalRegionTree,
               terminals: Terminals, v_max=()) -> VirtualTube:
    """Bundle the planning results; the tree must come from ``spatial``."""
    if tree.source_hash != spatial.content_hash():
        raise AssemblyError("critical-region tree was built from a different spatial solution")
    if tree.k_c != spatial.k_c or tree.n_t != spatial.n_segments:
        raise AssemblyError("tree and spatial solution disagree in k_c or segment count")
    if corridor.n_spheres != spatial.n_segments or corridor.dim != spatial.dim:
        raise AssemblyError("corridor does not match the spatial solution")
    if terminals.dim != spatial.dim:
        raise AssemblyError("terminals do not match the spatial solution")
    return VirtualTube(terminals, corridor, spatial, tree, tuple(np.atleast_1d(v_max).tolist()))


def _combine(thetas, control_points):
    # explicit sum over boundaries so single and batched queries agree bit for bit
    out = thetas[:, 0, None, None, None] * control_points[0]
    for k in range(1, control_points.shape[0]):
        out = out + thetas[:, k, None, None, None] * control_points[k]
    return out


def trajectory(tube: VirtualTube, theta) -> PiecewiseBezier:
    """Member trajectory for weights ``theta`` (no optimization solve)."""
    theta = check_weights(theta, tube.k_c)
    cps = _combine(theta[None], tube.spatial.control_points)[0]
    return PiecewiseBezier(cps, eval_optimizer(tube.tree.locate(theta), theta))


def generate(tube: VirtualTube, thetas):
    """Control points ``(k, M, p + 1, n)`` and durations ``(k, M)`` for many weights."""
    thetas = np.atleast_2d(np.asarray(thetas, float))
    cps = _combine(thetas, tube.spatial.control_points)
    dts = np.empty((len(thetas), tube.n_t))
    for i, th in enumerate(thetas):
        dts[i] = eval_optimizer(tube.tree.locate(th), th)
    return cps, dts


def _solve_weights(points, target, tol):
    """Convex weights reproducing ``target`` from rows of ``points``.

    Nonnegative least squares on the system augmented with a heavily
    weighted sum-to-one row.
    """
    P = np.asarray(points, float)
    x = np.asarray(target, float)
    scale = max(1.0, float(np.abs(P).max()))
    w = 1e3 * scale
    A = np.vstack([P.T, w * np.ones(len(P))])
    rhs = np.concatenate([x, [w]])
    theta, _ = nnls(A, rhs)
    theta = theta / theta.sum()
    dist = float(np.linalg.norm(theta @ P - x))
    if dist > tol * scale:
        raise AssignmentError(
            f"point {x.tolist()} is {dist:.3g} m from the hull of the boundary starts", dist
        )
    return theta, dist


def assign_parameters(tube: VirtualTube, starts, tol=1e-6):
    """Weights ``theta`` whose trajectories start at the given points."""
    P = tube.boundary_starts
    out = []
    for s in np.atleast_2d(np.asarray(starts, float)):
        theta, _ = _solve_weights(P, s, tol)
        # snap to exact vertex weights when a boundary start is hit
        hit = np.flatnonzero(np.all(P == s, axis=1))
        if hit.size:
            theta = np.zeros(tube.k_c)
            theta[hit[0]] = 1.0
        out.append(theta)
    return out


def cross_section(tube: VirtualTube, fraction: float) -> CrossSection:
    """Boundary samples at ``fraction`` of the shared initial allocation."""
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"fraction must lie in [0, 1], got {fraction}")
    ref = tube.spatial.boundary(0)
    m, tau = ref.locate(fraction * ref.total_time)
    u = tau / ref.durations[m]
    pts = np.array([
        tube.spatial.boundary(k)(ref.breaks[m] + tau) for k in range(tube.k_c)
    ])
    return CrossSection(float(fraction), m, float(u), pts)


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def content_hash(payload) -> str:
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def dumps(tube: VirtualTube) -> str:
    payload = tube.to_dict()
    return json.dumps({"hash": content_hash(payload), "tube": payload}, sort_keys=True)


def loads(text: str) -> VirtualTube:
    try:
        doc = json.loads(text)
        payload = doc["tube"]
        stored = doc["hash"]
    except (ValueError, KeyError, TypeError) as exc:
        raise IntegrityError(f"unreadable tube artifact: {exc}") from None
    if content_hash(payload) != stored:
        raise IntegrityError("tube artifact content hash mismatch")
    if payload.get("version") != ARTIFACT_VERSION:
        raise IntegrityError(f"unsupported artifact version {payload.get('version')!r}")
    t = payload["terminals"]
    terminals = Terminals(np.array(t["c0"]), np.array(t["c1"]), np.array(t["A"]),
                          np.array(t["b"]))
    corridor = SphereCorridor.from_dict(payload["corridor"])
    s = payload["spatial"]
    cps = np.array(s["control_points"], float)
    cps.setflags(write=False)
    spatial = SpatialSolution(cps, np.array(s["durations"], float),
                              np.array(s["objectives"], float),
                              np.array(s["kkt_residuals"], float), int(s["d"]))
    tree = CriticalRegionTree.from_dict(payload["tree"])
    return build_tube(corridor, spatial, tree, terminals, payload.get("v_max", ()))


def save(tube: VirtualTube, path):
    with open(path, "w") as fh:
        fh.write(dumps(tube))


def load(path) -> VirtualTube:
    with open(path) as fh:
        return loads(fh.read())
