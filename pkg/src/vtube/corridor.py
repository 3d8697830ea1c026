"""Free-space sphere corridors and boundary path selection.

The planner reproduces the output of a sampling-based sphere-tree search:
an ordered list of pairwise intersecting, obstacle-free spheres leading from
the start terminal to the goal terminal. Candidate centers come from a
jittered grid, radii from the clearance to the nearest known obstacle, and
the sphere sequence from A* over the intersection graph.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    ConfigurationError,
    DegenerateSegmentError,
    GeometryError,
    PlanningError,
)


# --------------------------------------------------------------------------
# obstacles and maps


@dataclass(frozen=True)
class SphereObstacle:
    center: tuple
    radius: float
    known: bool = True

    def distance(self, points):
        pts = np.atleast_2d(points)
        return np.linalg.norm(pts - np.asarray(self.center, float), axis=1) - self.radius


@dataclass(frozen=True)
class BoxObstacle:
    lo: tuple
    hi: tuple
    known: bool = True

    def distance(self, points):
        """Signed distance to an axis-aligned box (negative inside)."""
        pts = np.atleast_2d(points)
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        c, h = (lo + hi) / 2, (hi - lo) / 2
        q = np.abs(pts - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class ObstacleMap:
    """World bounds plus sphere/box obstacles, each flagged known or unknown."""

    lo: tuple
    hi: tuple
    obstacles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ConfigurationError("world bounds must satisfy lo < hi per axis")

    @property
    def dim(self):
        return len(self.lo)

    def known(self):
        return tuple(o for o in self.obstacles if o.known)

    def obstacle_distance(self, points, known_only=True):
        """Signed distance from each point to the nearest (known) obstacle."""
        pts = np.atleast_2d(np.asarray(points, float))
        obs = self.known() if known_only else self.obstacles
        if not obs:
            return np.full(len(pts), np.inf)
        return np.min([o.distance(pts) for o in obs], axis=0)

    def clearance(self, points, known_only=True):
        """Distance to the nearest known obstacle or world wall."""
        pts = np.atleast_2d(np.asarray(points, float))
        walls = np.minimum(pts - np.asarray(self.lo), np.asarray(self.hi) - pts).min(axis=1)
        return np.minimum(walls, self.obstacle_distance(pts, known_only))

    def reveal(self, predicate):
        """Copy of the map where unknown obstacles matching ``predicate`` become known."""
        obs = tuple(
            o if o.known or not predicate(o) else replace(o, known=True)
            for o in self.obstacles
        )
        return replace(self, obstacles=obs)


# --------------------------------------------------------------------------
# terminals


@dataclass(frozen=True)
class Terminals:
    """Start and goal polytopes (vertex lists) and the affine pairing ``f``.

    ``f(x) = A @ x + b`` maps start vertex ``k`` to goal vertex ``k``.
    """

    c0: np.ndarray
    c1: np.ndarray
    A: np.ndarray
    b: np.ndarray

    @classmethod
    def from_vertices(cls, c0, c1):
        """Build the vertexwise affine pairing between two polytopes.

        When the vertices do not span the ambient space (a triangle in 3-D),
        the missing directions are mapped onto each other so ``A`` stays
        invertible.
        """
        c0 = np.array(c0, float)
        c1 = np.array(c1, float)
        if c0.shape != c1.shape:
            raise ConfigurationError("C0 and C1 need the same number of vertices")
        n = c0.shape[1]
        m0, m1 = c0.mean(axis=0), c1.mean(axis=0)
        E0, E1 = (c0 - m0).T, (c1 - m1).T
        U0, s0, _ = np.linalg.svd(E0)
        U1, s1, _ = np.linalg.svd(E1)
        r = int(np.sum(s0 > 1e-9 * max(1.0, s0.max(initial=0.0))))
        # complete the span with orthogonal complements
        S0 = np.hstack([E0, U0[:, r:]])
        S1 = np.hstack([E1, U1[:, r:]])
        A = S1 @ np.linalg.pinv(S0)
        if abs(np.linalg.det(A)) < 1e-12:
            raise ConfigurationError("terminal map f is not invertible")
        b = m1 - A @ m0
        t = cls(c0, c1, A, b)
        if np.max(np.abs(t.f(c0) - c1)) > 1e-8 * (1 + np.abs(c1).max()):
            raise ConfigurationError("C0 and C1 are not affinely related vertexwise")
        if _hulls_overlap(c0, c1):
            raise ConfigurationError("terminals C0 and C1 must be disjoint")
        return t

    def f(self, x):
        x = np.asarray(x, float)
        return x @ self.A.T + self.b

    @property
    def dim(self):
        return self.c0.shape[1]


def _hulls_overlap(a, b):
    # bounding-sphere test is enough for the disjointness sanity check
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    ra = np.linalg.norm(a - ca, axis=1).max()
    rb = np.linalg.norm(b - cb, axis=1).max()
    if np.linalg.norm(ca - cb) > ra + rb:
        return False
    from scipy.optimize import linprog

    # feasibility of sum(l_a a_i) == sum(l_b b_j)
    na, nb = len(a), len(b)
    A_eq = np.vstack([
        np.hstack([a.T, -b.T]),
        np.hstack([np.ones(na), np.zeros(nb)]),
        np.hstack([np.zeros(na), np.ones(nb)]),
    ])
    b_eq = np.concatenate([np.zeros(a.shape[1]), [1.0, 1.0]])
    res = linprog(np.zeros(na + nb), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


# --------------------------------------------------------------------------
# intersection planes and corridors


@dataclass(frozen=True)
class IntersectionPlane:
    """Circle (disk) where two consecutive spheres meet.

    ``center`` is the disk center, ``radius`` its radius, ``tangent`` the unit
    vector from the first sphere center to the second, and ``normal`` /
    ``binormal`` an orthonormal frame of the disk with
    ``cross(normal, binormal) == tangent`` (3-D). In 2-D ``binormal`` is None.
    """

    center: np.ndarray
    radius: float
    tangent: np.ndarray
    normal: np.ndarray
    binormal: np.ndarray | None

    def point(self, rho, phi):
        """Point ``center + rho * radius * (n cos(phi) + b sin(phi))``."""
        d = self.normal * np.cos(phi)
        if self.binormal is not None:
            d = d + self.binormal * np.sin(phi)
        return self.center + rho * self.radius * d


def intersection_plane(c1, r1, c2, r2, normal_hint=None):
    """Maximum intersection disk of spheres ``(c1, r1)`` and ``(c2, r2)``.

    Returns ``(center, radius, tangent, normal, binormal)`` packed in an
    :class:`IntersectionPlane`. Raises :class:`GeometryError` for disjoint,
    tangent, nested or concentric spheres.
    """
    c1 = np.asarray(c1, float)
    c2 = np.asarray(c2, float)
    delta = c2 - c1
    dist = float(np.linalg.norm(delta))
    if dist <= 1e-12:
        raise GeometryError("concentric spheres have no intersection plane")
    if dist >= r1 + r2:
        raise GeometryError(f"spheres do not overlap (d={dist:.6g}, r1+r2={r1 + r2:.6g})")
    if dist <= abs(r1 - r2):
        raise GeometryError("one sphere is nested in the other")
    v = delta / dist
    a = (dist**2 + r1**2 - r2**2) / (2 * dist)
    lam2 = r1**2 - a**2
    if lam2 <= 0:
        raise GeometryError("degenerate intersection")
    n, b = _frame(v, normal_hint)
    return IntersectionPlane(c1 + a * v, float(np.sqrt(lam2)), v, n, b)


def _frame(v, hint=None):
    dim = v.size
    if dim == 2:
        n = np.array([-v[1], v[0]])
        if hint is not None and n @ hint < 0:
            n = -n
        return n, None
    if hint is not None:
        n = hint - (hint @ v) * v
        if np.linalg.norm(n) < 1e-9:
            hint = None
    if hint is None:
        axis = np.zeros(dim)
        axis[int(np.argmin(np.abs(v)))] = 1.0
        n = axis - (axis @ v) * v
    n = n / np.linalg.norm(n)
    b = np.cross(v, n)
    return n, b / np.linalg.norm(b)


@dataclass(frozen=True)
class SphereCorridor:
    """Ordered intersecting spheres; ``planes[m]`` joins sphere m and m+1."""

    centers: np.ndarray
    radii: np.ndarray
    planes: tuple = field(default=())
    explored: int = 0

    @classmethod
    def from_spheres(cls, centers, radii, explored=0):
        centers = np.array(centers, float)
        radii = np.array(radii, float)
        planes = []
        hint = None
        for m in range(len(radii) - 1):
            pl = intersection_plane(centers[m], radii[m], centers[m + 1], radii[m + 1], hint)
            planes.append(pl)
            hint = pl.normal
        centers.setflags(write=False)
        radii.setflags(write=False)
        return cls(centers, radii, tuple(planes), explored)

    @property
    def n_spheres(self):
        return len(self.radii)

    @property
    def dim(self):
        return self.centers.shape[1]

    def contains(self, points, tol=1e-9):
        """Mask of points inside the union of spheres."""
        pts = np.atleast_2d(points)
        d = np.linalg.norm(pts[:, None, :] - self.centers[None], axis=2)
        return np.any(d <= self.radii[None] + tol, axis=1)

    def to_dict(self):
        return {"centers": self.centers.tolist(), "radii": self.radii.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls.from_spheres(d["centers"], d["radii"])


@dataclass(frozen=True)
class CorridorConfig:
    spacing: float = 2.0
    r_max: float = 3.0
    r_min: float = 0.5
    margin: float = 0.6
    lambda_min: float = 0.5
    jitter: float = 0.25
    hop_penalty: float = 1.0
    max_nodes: int = 200_000


def _edge_ok(c1, r1, c2, r2, lambda_min):
    d = np.linalg.norm(c2 - c1)
    if d >= r1 + r2 or d <= abs(r1 - r2) or d < 1e-12:
        return False
    a = (d**2 + r1**2 - r2**2) / (2 * d)
    return r1**2 - a**2 >= lambda_min**2


def plan_corridor(obstacle_map: ObstacleMap, terminals: Terminals, seed: int = 0,
                  config: CorridorConfig | None = None, start_sphere=None):
    """Plan an ordered sphere corridor from ``C0`` to ``C1``.

    Only known obstacles are considered. ``start_sphere=(center, radius)``
    forces the first sphere (used when replanning from a committed tube).
    """
    cfg = config or CorridorConfig()
    dim = obstacle_map.dim
    if terminals.dim != dim:
        raise ConfigurationError("terminal and map dimensions differ")
    rng = np.random.default_rng(seed)

    def radius_at(pts, cap):
        r = obstacle_map.clearance(pts) - cfg.margin
        return np.minimum(r, cap)

    def terminal_sphere(verts):
        c = verts.mean(axis=0)
        need = np.linalg.norm(verts - c, axis=1).max() + 1e-6
        r = float(radius_at(c[None], max(cfg.r_max, need))[0])
        if r < need:
            raise PlanningError("terminal region is too close to obstacles", 0)
        return c, r

    if start_sphere is not None:
        s_c, s_r = np.asarray(start_sphere[0], float), float(start_sphere[1])
        if np.linalg.norm(terminals.c0 - s_c, axis=1).max() > s_r + 1e-9:
            raise PlanningError("start sphere does not contain C0", 0)
    else:
        s_c, s_r = terminal_sphere(terminals.c0)
    g_c, g_r = terminal_sphere(terminals.c1)

    # jittered grid of candidate centers
    lo, hi = np.asarray(obstacle_map.lo), np.asarray(obstacle_map.hi)
    axes = [np.arange(l + cfg.spacing / 2, h, cfg.spacing) for l, h in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    if len(grid) > cfg.max_nodes:
        raise ConfigurationError("grid too fine for node budget")
    grid = grid + rng.uniform(-cfg.jitter, cfg.jitter, grid.shape) * cfg.spacing
    grid = np.clip(grid, lo, hi)
    radii = radius_at(grid, cfg.r_max)
    keep = radii >= cfg.r_min
    centers = np.vstack([s_c[None], g_c[None], grid[keep]])
    rads = np.concatenate([[s_r, g_r], radii[keep]])

    tree = cKDTree(centers)
    reach = 2 * max(rads.max(), cfg.r_max)
    adjacency = {i: [] for i in range(len(centers))}
    for i, j in sorted(tree.query_pairs(reach)):
        if _edge_ok(centers[i], rads[i], centers[j], rads[j], cfg.lambda_min):
            cost = float(np.linalg.norm(centers[i] - centers[j])) + cfg.hop_penalty
            adjacency[i].append((j, cost))
            adjacency[j].append((i, cost))

    path, explored = _astar(adjacency, centers, 0, 1)
    if path is None:
        raise PlanningError("no sphere corridor connects C0 to C1", explored)
    path = _shortcut(path, centers, rads, cfg.lambda_min)
    return SphereCorridor.from_spheres(centers[path], rads[path], explored)


def _astar(adjacency, centers, start, goal):
    h = lambda i: float(np.linalg.norm(centers[i] - centers[goal]))  # noqa: E731
    counter = itertools.count()
    frontier = [(h(start), next(counter), start)]
    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    while frontier:
        _, _, node = heapq.heappop(frontier)
        if node in closed:
            continue
        if node == goal:
            path = [node]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1], len(closed) + 1
        closed.add(node)
        for nxt, cost in adjacency[node]:
            ng = g[node] + cost
            if nxt not in g or ng < g[nxt] - 1e-12:
                g[nxt] = ng
                parent[nxt] = node
                heapq.heappush(frontier, (ng + h(nxt), next(counter), nxt))
    return None, len(closed)


def _shortcut(path, centers, rads, lambda_min):
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not _edge_ok(
            centers[path[i]], rads[path[i]], centers[path[j]], rads[path[j]], lambda_min
        ):
            j -= 1
        out.append(path[j])
        i = j
    return out


# --------------------------------------------------------------------------
# boundary paths


def _pick_vertices(n_vertices, k_c):
    return [int(round(i * n_vertices / k_c)) % n_vertices for i in range(k_c)]


def select_boundary_terminals(corridor: SphereCorridor, terminals: Terminals, k_c: int,
                              rho: float = 0.8, angles=None):
    """Boundary paths through the corridor's intersection disks.

    Returns an array ``(k_c, n_spheres + 1, dim)``: path ``k`` starts at a
    vertex of ``C0``, crosses every intersection disk at
    ``plane.point(rho, phi_k)`` and ends at ``f(start)``. The angle
    ``phi_k`` is the direction of the start vertex around the corridor axis,
    measured in the first disk's frame, unless ``angles`` is given. Frames are
    parallel-transported between disks so the boundary paths do not twist.
    """
    if not 0.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho}")
    if k_c < 2:
        raise ConfigurationError("need at least two boundary trajectories")
    nv = len(terminals.c0)
    if k_c > nv:
        raise ConfigurationError(f"k_c={k_c} exceeds the {nv} vertices of C0")
    idx = _pick_vertices(nv, k_c)
    starts = terminals.c0[idx]
    goals = terminals.f(starts)
    planes = corridor.planes
    if angles is None:
        if planes:
            ref = planes[0]
            rel = starts - starts.mean(axis=0)
            if ref.binormal is None:
                s = rel @ ref.normal
                span = np.abs(s).max()
                angles = np.arccos(np.clip(s / span, -1.0, 1.0)) if span > 0 else np.zeros(k_c)
            else:
                angles = np.arctan2(rel @ ref.binormal, rel @ ref.normal)
        else:
            angles = 2 * np.pi * np.arange(k_c) / k_c
    angles = np.asarray(angles, float)
    if angles.shape != (k_c,):
        raise ConfigurationError("need one angle per boundary trajectory")
    wrapped = np.mod(angles, 2 * np.pi)
    for a, b in itertools.combinations(range(k_c), 2):
        gap = abs(wrapped[a] - wrapped[b])
        if min(gap, 2 * np.pi - gap) < 1e-9:
            raise ConfigurationError(f"boundary {a} and {b} share the same angle")
    if planes and planes[0].binormal is None:
        pts = [[pl.center + rho * pl.radius * np.cos(phi) * pl.normal for pl in planes]
               for phi in angles]
        if len({round(float(np.cos(a)), 12) for a in angles}) < k_c:
            raise ConfigurationError("boundary offsets coincide in 2-D")
    else:
        pts = [[pl.point(rho, phi) for pl in planes] for phi in angles]
    paths = np.empty((k_c, len(planes) + 2, terminals.dim))
    for k in range(k_c):
        paths[k, 0] = starts[k]
        if planes:
            paths[k, 1:-1] = pts[k]
        paths[k, -1] = goals[k]
    return paths


def init_time_allocation(boundary_paths, v_nominal: float):
    """Chord-length durations averaged over boundary paths."""
    if not v_nominal > 0:
        raise ConfigurationError("v_nominal must be positive")
    paths = np.asarray(boundary_paths, float)
    if paths.ndim == 2:
        paths = paths[None]
    chords = np.linalg.norm(np.diff(paths, axis=1), axis=2)
    if np.any(chords <= 1e-12):
        k, m = np.argwhere(chords <= 1e-12)[0]
        raise DegenerateSegmentError(f"path {k} has a zero-length segment {m}")
    return chords.mean(axis=0) / v_nominal
