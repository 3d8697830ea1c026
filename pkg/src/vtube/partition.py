"""Approximate multi-parametric solution of the time LP over the weight simplex.

The simplex of barycentric weights is split recursively into sub-simplices
(critical regions). Inside a region the optimal allocation is approximated by
interpolating the exact optimizers at its vertices, which overestimates the
convex value function. A region is split at the point of largest
overestimate until that overestimate is at most ``eps``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import (
    BudgetError,
    DegenerateSimplexError,
    DomainError,
    FeasibilityHoleError,
    IntegrityError,
    LPInfeasibleError,
)
from .temporal import ParametricTimeLP, solve_lp

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # 0.618...
BARY_TOL = 1e-9
MIN_VOLUME = 1e-12
FORMAT_VERSION = 1


def vertex_matrix(vertices):
    """``[[1 ... 1], [theta_1[1:] ... theta_k[1:]]]`` for vertex rows ``theta_i``."""
    V = np.asarray(vertices, float)
    return np.vstack([np.ones(V.shape[0]), V[:, 1:].T])


def simplex_volume(vertices):
    k = len(vertices)
    return abs(np.linalg.det(vertex_matrix(vertices))) / math.factorial(k - 1)


@dataclass(eq=False)
class CriticalRegion:
    """Sub-simplex of the weight simplex with exact optimizers at its vertices.

    ``vertices`` is ``(k_c, k_c)`` (one barycentric point per row), ``X`` is
    ``(n_t, k_c)`` (one optimal allocation per column) and ``values`` the
    matching optimal total times.
    """

    vertices: np.ndarray
    X: np.ndarray
    values: np.ndarray
    depth: int = 0
    children: list = field(default_factory=list)
    max_error: float = float("nan")

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, float)
        self.X = np.asarray(self.X, float)
        self.values = np.asarray(self.values, float)
        M = vertex_matrix(self.vertices)
        if abs(np.linalg.det(M)) < MIN_VOLUME:
            raise DegenerateSimplexError("critical region vertices are affinely dependent")
        self._lu = lu_factor(M)

    @property
    def is_leaf(self):
        return not self.children

    @property
    def M(self):
        return vertex_matrix(self.vertices)

    @property
    def volume(self):
        return simplex_volume(self.vertices)

    def barycentric(self, theta):
        """Weights ``lam`` with ``theta = sum_i lam_i vertices[i]``."""
        theta = np.asarray(theta, float)
        rhs = np.concatenate([[1.0], theta[1:]])
        return lu_solve(self._lu, rhs)

    def contains(self, theta, tol=BARY_TOL):
        return bool(np.all(self.barycentric(theta) >= -tol))

    def interpolated_value(self, theta):
        return float(self.values @ self.barycentric(theta))

    def leaves(self):
        if self.is_leaf:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out


def eval_optimizer(leaf: CriticalRegion, theta) -> np.ndarray:
    """Interpolated allocation ``X M^-1 [1, theta[1:]]`` inside ``leaf``."""
    return leaf.X @ leaf.barycentric(theta)


class _Oracle:
    """Cached exact LP solves over the parametric family."""

    def __init__(self, plp: ParametricTimeLP):
        self.plp = plp
        self.cache = {}
        self.basis = None
        self.solves = 0

    def __call__(self, theta):
        theta = np.clip(np.asarray(theta, float), 0.0, None)
        theta = theta / theta.sum()
        key = theta.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        try:
            sol = solve_lp(self.plp.at(theta), basis=self.basis)
        except LPInfeasibleError as exc:
            raise FeasibilityHoleError(
                f"time LP infeasible at theta={theta.tolist()} inside a feasible region"
            ) from exc
        self.solves += 1
        self.basis = sol.basis
        self.cache[key] = sol
        return sol


def _line(p, q, t):
    (t0, f0), (t1, f1) = p, q
    return f0 + (f1 - f0) * (t - t0) / (t1 - t0)


def _interval_bound(pts, j):
    """Upper bound and its location for a concave function on ``[t_j, t_j+1]``.

    Uses the secants of the neighboring intervals extended into this one; the
    bound is the peak of their lower envelope.
    """
    a, b = pts[j][0], pts[j + 1][0]
    lines = []
    if j >= 1:
        lines.append((pts[j - 1][:2], pts[j][:2]))
    if j + 2 < len(pts):
        lines.append((pts[j + 1][:2], pts[j + 2][:2]))
    if not lines:
        return np.inf, 0.5 * (a + b)
    cand = [a, b]
    if len(lines) == 2:
        (p0, p1), (q0, q1) = lines
        s0 = (p1[1] - p0[1]) / (p1[0] - p0[0])
        s1 = (q1[1] - q0[1]) / (q1[0] - q0[0])
        if s0 != s1:
            t = (q0[1] - p0[1] + s0 * p0[0] - s1 * q0[0]) / (s0 - s1)
            if a < t < b:
                cand.append(t)
    best_val, best_t = -np.inf, a
    for t in cand:
        v = min(_line(p, q, t) for p, q in lines)
        if v > best_val:
            best_val, best_t = v, t
    return best_val, best_t


def _concave_max_1d(fun, tol, max_evals=200):
    """Maximize a concave function on ``[0, 1]`` to absolute accuracy ``tol``.

    ``fun(t)`` returns ``(value, payload)``. Bracketing by golden section is
    combined with steps to the peak of the secant envelope, which lands on the
    kink of a piecewise-linear function exactly; the same envelope certifies
    the stopping rule.
    """
    pts = []

    def add(t):
        f, pl = fun(t)
        pts.append((t, f, pl))
        pts.sort(key=lambda z: z[0])

    for t in (0.0, 1.0 - GOLDEN, GOLDEN, 1.0):
        add(t)
    last_width = 1.0
    for _ in range(max_evals):
        i = max(range(len(pts)), key=lambda j: pts[j][1])
        best = pts[i][1]
        intervals = [j for j in (i - 1, i) if 0 <= j < len(pts) - 1]
        bounds = [(*_interval_bound(pts, j), j) for j in intervals]
        ub, t_ub, j = max(bounds, key=lambda z: z[0])
        if ub - best <= tol:
            break
        a, b = pts[j][0], pts[j + 1][0]
        width = b - a
        if width < 1e-12:
            break
        margin = 0.05 * width
        if a + margin < t_ub < b - margin and width < 0.9 * last_width + 1e-15:
            t_new = t_ub
        else:
            # golden split of the larger part guarantees bracket shrinkage
            t_new = a + GOLDEN * width if pts[j + 1][1] >= pts[j][1] else b - GOLDEN * width
        last_width = width
        add(t_new)
    t, f, pl = max(pts, key=lambda z: z[1])
    return t, f, pl


def _simplex_max(fun, k, tol):
    """Maximize a concave function of barycentric weights over ``k`` vertices.

    Nested 1-D searches: the first weight is the outer variable and the
    rest are optimized on the scaled face opposite vertex 0. Partial maxima
    of a concave function over such fibers are concave, so every level is a
    concave 1-D problem. Inner levels run at a tenth of the outer tolerance.
    """
    if k == 1:
        lam = np.ones(1)
        return lam, fun(lam)
    if k == 2:
        t, val, _ = _concave_max_1d(lambda s: (fun(np.array([1 - s, s])), None), tol)
        return np.array([1 - t, t]), val

    def outer(s):
        lam_rest, v = _simplex_max(lambda mu: fun(np.concatenate([[s], (1 - s) * mu])), k - 1,
                                   0.1 * tol)
        return v, lam_rest

    s, val, rest = _concave_max_1d(outer, tol)
    return np.concatenate([[s], (1 - s) * rest]), val


def max_error(region: CriticalRegion, plp: ParametricTimeLP, eps: float, oracle=None):
    """Largest overestimate ``V~ - V*`` inside ``region``.

    Returns ``(error, theta, x)`` where ``x`` is the exact optimizer at the
    maximizer ``theta``. The search stops when the concave upper envelope is
    within ``0.005 * eps`` of the best value found, so the reported error is
    within ``0.01 * eps`` of the true maximum.
    """
    oracle = oracle or _Oracle(plp)
    k = len(region.vertices)
    tol = 0.005 * eps if np.isfinite(eps) else 1e-2

    def err(lam):
        theta = lam @ region.vertices
        sol = oracle(theta)
        return float(region.values @ lam) - sol.value

    lam, val = _simplex_max(err, k, tol)
    theta = lam @ region.vertices
    return val, theta, oracle(theta).x


@dataclass(eq=False)
class CriticalRegionTree:
    root: CriticalRegion
    eps: float
    source_hash: str = ""
    lp_solves: int = 0

    @property
    def k_c(self):
        return self.root.vertices.shape[0]

    @property
    def n_t(self):
        return self.root.X.shape[0]

    def leaves(self):
        return self.root.leaves()

    @property
    def n_leaves(self):
        return len(self.leaves())

    @property
    def depth(self):
        return max(leaf.depth for leaf in self.leaves())

    def locate(self, theta):
        return locate(self, theta)

    def evaluate(self, theta):
        return eval_optimizer(self.locate(theta), theta)

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "eps": _f(self.eps),
            "source_hash": self.source_hash,
            "root": _node_to_dict(self.root),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != FORMAT_VERSION:
            raise IntegrityError(f"unsupported tree format {d.get('version')!r}")
        return cls(_node_from_dict(d["root"]), float(d["eps"]), d.get("source_hash", ""))

    def dumps(self):
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _f(x):
    # repr round-trips doubles exactly; json lacks inf
    return repr(float(x)) if not np.isfinite(x) else float(x)


def _node_to_dict(node):
    return {
        "vertices": node.vertices.tolist(),
        "X": node.X.tolist(),
        "values": node.values.tolist(),
        "depth": node.depth,
        "max_error": _f(node.max_error),
        "children": [_node_to_dict(c) for c in node.children],
    }


def _node_from_dict(d):
    node = CriticalRegion(d["vertices"], d["X"], d["values"], d["depth"],
                          max_error=float(d["max_error"]))
    node.children = [_node_from_dict(c) for c in d["children"]]
    return node


def partition(plp: ParametricTimeLP, eps: float, max_depth: int = 20) -> CriticalRegionTree:
    """Split the weight simplex until interpolation error is at most ``eps``."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    k = plp.k_c
    oracle = _Oracle(plp)
    verts = np.eye(k)
    sols = []
    for i in range(k):
        try:
            sols.append(oracle(verts[i]))
        except FeasibilityHoleError as exc:
            raise LPInfeasibleError(f"boundary LP {i} is infeasible") from exc.__cause__
    root = CriticalRegion(verts, np.column_stack([s.x for s in sols]),
                          np.array([s.value for s in sols]))
    stack = [root]
    while stack:
        node = stack.pop()
        if not np.isfinite(eps):
            node.max_error = 0.0
            continue
        err, theta, x = max_error(node, plp, eps, oracle)
        node.max_error = err
        if err <= eps:
            continue
        if node.depth >= max_depth:
            raise BudgetError(
                f"depth cap {max_depth} reached with error {err:.4g} > eps={eps}",
                worst_error=err,
            )
        value = float(np.sum(x))
        for i in range(k):
            cv = node.vertices.copy()
            cv[i] = theta
            if simplex_volume(cv) < MIN_VOLUME:
                continue
            cX = node.X.copy()
            cX[:, i] = x
            cvals = node.values.copy()
            cvals[i] = value
            node.children.append(CriticalRegion(cv, cX, cvals, node.depth + 1))
        if not node.children:
            raise DegenerateSimplexError(
                f"no nondegenerate child when splitting at theta={theta.tolist()}"
            )
        stack.extend(reversed(node.children))
    return CriticalRegionTree(root, float(eps), plp.source_hash, oracle.solves)


def locate(tree: CriticalRegionTree, theta) -> CriticalRegion:
    """Leaf containing ``theta``; shared faces go to the lowest-index child."""
    theta = np.asarray(theta, float).reshape(-1)
    if theta.shape != (tree.k_c,):
        raise DomainError(f"theta must have {tree.k_c} entries")
    if np.any(theta < -BARY_TOL) or abs(theta.sum() - 1.0) > BARY_TOL:
        raise DomainError(f"theta {theta.tolist()} is outside the weight simplex")
    node = tree.root
    while node.children:
        for child in node.children:
            if child.contains(theta):
                node = child
                break
        else:
            # rounding at a shared face: take the child with the largest minimum weight
            node = max(node.children, key=lambda c: c.barycentric(theta).min())
    return node
