"""Minimum-derivative spatial optimization of boundary trajectories.

For each boundary path the joint positions are fixed in the intersection
disks and the remaining control points minimize the integral of the squared
``d``-th derivative subject to rest-to-rest end states, ``C^{d-1}``
continuity at joints, sphere containment of each segment's control points
and loose box bounds on derivative control points.

Equalities are eliminated through a null-space parametrization; the ball and
box constraints are handled by ADMM with closed-form projections.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lstsq, null_space

from .bezier import PiecewiseBezier, difference_matrix
from .corridor import SphereCorridor
from .errors import ConfigurationError, DomainError, SpatialInfeasibleError

SPHERE_SHRINK = 1e-7


def bernstein_gram(q: int) -> np.ndarray:
    """``G[i, j] = int_0^1 B_{q,i} B_{q,j} du``."""
    i = np.arange(q + 1)
    num = np.array([[comb(q, a) * comb(q, b) for b in i] for a in i], float)
    den = np.array([[comb(2 * q, a + b) for b in i] for a in i], float) * (2 * q + 1)
    return num / den


def segment_hessian(p: int, d: int, dt: float) -> np.ndarray:
    """Matrix ``H`` with ``int_0^dt |h^(d)|^2 dt = sum_c P_c^T H P_c``."""
    if d > p:
        return np.zeros((p + 1, p + 1))
    c = factorial(p) / factorial(p - d) / dt**d
    D = difference_matrix(p, d)
    return c**2 * dt * D.T @ bernstein_gram(p - d) @ D


def objective(control_points, durations, d):
    """Integral of the squared ``d``-th derivative of a piecewise trajectory."""
    P = np.asarray(control_points, float)
    p = P.shape[1] - 1
    return float(sum(
        np.einsum("in,ij,jn->", P[m], segment_hessian(p, d, dt), P[m])
        for m, dt in enumerate(durations)
    ))


def objective_gradient(control_points, durations, d):
    P = np.asarray(control_points, float)
    p = P.shape[1] - 1
    return np.stack([2 * segment_hessian(p, d, dt) @ P[m] for m, dt in enumerate(durations)])


@dataclass(frozen=True)
class SpatialProblem:
    """Spatial QP data shared by all boundary trajectories.

    ``joints`` has shape ``(k_c, M + 1, n)``: fixed segment end points of
    each boundary path. ``deriv_bounds[r - 1]`` bounds the ``r``-th derivative
    control points componentwise, ``r = 1 .. d - 1``.
    """

    corridor: SphereCorridor
    joints: np.ndarray
    durations: np.ndarray
    p: int = 5
    d: int = 3
    deriv_bounds: tuple = ()

    def __post_init__(self):
        J = np.asarray(self.joints, float)
        dts = np.asarray(self.durations, float)
        object.__setattr__(self, "joints", J)
        object.__setattr__(self, "durations", dts)
        if J.ndim != 3:
            raise ConfigurationError("joints must be (k_c, M + 1, n)")
        M = J.shape[1] - 1
        if dts.shape != (M,) or self.corridor.n_spheres != M:
            raise ConfigurationError(
                f"{M} segments, {dts.size} durations, {self.corridor.n_spheres} spheres"
            )
        if np.any(dts <= 0):
            raise ConfigurationError("durations must be positive")
        if self.d < 1 or self.p < 2 * self.d - 1:
            raise ConfigurationError(f"degree {self.p} too low for rest-to-rest order {self.d}")
        if self.deriv_bounds and len(self.deriv_bounds) != self.d - 1:
            raise ConfigurationError("need one derivative bound per order 1..d-1")

    @property
    def k_c(self):
        return self.joints.shape[0]

    @property
    def n_segments(self):
        return self.joints.shape[1] - 1

    @property
    def dim(self):
        return self.joints.shape[2]


@dataclass
class BoundaryResult:
    control_points: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    min_slack: float


def _equality_system(M, p, d, durations):
    """Rows acting on one coordinate of the flattened control points."""
    nv = M * (p + 1)
    rows, kinds = [], []

    def idx(m, k):
        return m * (p + 1) + k

    for m in range(M):
        for k in (0, p):
            r = np.zeros(nv)
            r[idx(m, k)] = 1.0
            rows.append(r)
            kinds.append(("joint", m if k == 0 else m + 1))
    for r_ord in range(1, d):
        D = difference_matrix(p, r_ord)
        first = np.zeros(nv)
        first[idx(0, 0):idx(0, p) + 1] = D[0]
        rows.append(first)
        kinds.append(("zero", 0))
        last = np.zeros(nv)
        last[idx(M - 1, 0):idx(M - 1, p) + 1] = D[-1]
        rows.append(last)
        kinds.append(("zero", 0))
        for m in range(M - 1):
            # continuity of the r-th derivative; scaled by dt_m^r
            ratio = (durations[m] / durations[m + 1]) ** r_ord
            row = np.zeros(nv)
            row[idx(m, 0):idx(m, p) + 1] = D[-1]
            row[idx(m + 1, 0):idx(m + 1, p) + 1] -= ratio * D[0]
            rows.append(row)
            kinds.append(("zero", 0))
    return np.array(rows), kinds


def _derivative_rows(M, p, d, durations):
    """Rows mapping flattened control points to derivative control points."""
    nv = M * (p + 1)
    blocks = []
    for r_ord in range(1, d):
        D = difference_matrix(p, r_ord)
        for m in range(M):
            c = factorial(p) / factorial(p - r_ord) / durations[m] ** r_ord
            B = np.zeros((D.shape[0], nv))
            B[:, m * (p + 1):(m + 1) * (p + 1)] = c * D
            blocks.append((r_ord, B))
    return blocks


def solve_boundary(prob: SpatialProblem, k: int, max_iter=10_000, tol=1e-8) -> BoundaryResult:
    """Solve the spatial QP for boundary path ``k``."""
    if not 0 <= k < prob.k_c:
        raise DomainError(f"boundary index {k} out of range")
    M, p, d, n = prob.n_segments, prob.p, prob.d, prob.dim
    corr = prob.corridor
    J = prob.joints[k]
    dts = prob.durations

    # fixed joints must sit inside their segment spheres
    for m in range(M):
        for pt in (J[m], J[m + 1]):
            gap = np.linalg.norm(pt - corr.centers[m]) - corr.radii[m]
            if gap > 1e-9:
                raise SpatialInfeasibleError(
                    f"joint of segment {m} lies {gap:.3g} m outside its sphere", segment=m
                )

    A, kinds = _equality_system(M, p, d, dts)
    B = np.zeros((A.shape[0], n))
    for i, (kind, j) in enumerate(kinds):
        if kind == "joint":
            B[i] = J[j]
    x0, *_ = lstsq(A, B)
    if np.max(np.abs(A @ x0 - B)) > 1e-9 * (1 + np.abs(B).max()):
        raise SpatialInfeasibleError("boundary and continuity equalities are inconsistent")
    N = null_space(A)
    H = np.zeros((M * (p + 1), M * (p + 1)))
    for m in range(M):
        s = slice(m * (p + 1), (m + 1) * (p + 1))
        H[s, s] = segment_hessian(p, d, dts[m])
    scale = 1.0 / max(np.abs(H).max(), 1e-300)
    H = H * scale

    if N.shape[1] == 0:
        X = x0
        return _finish(prob, k, X.reshape(M, p + 1, n), 0.0, 0)

    Q = 2 * N.T @ H @ N
    G = 2 * N.T @ H @ x0

    # constraint rows: control points (balls) and derivative points (boxes)
    point_rows = [i for i in range(M * (p + 1)) if np.linalg.norm(N[i]) > 1e-12]
    seg_of = np.array([i // (p + 1) for i in point_rows], dtype=int)
    centers = corr.centers[seg_of]
    radii = corr.radii[seg_of] * (1 - SPHERE_SHRINK)
    C_rows = [np.eye(M * (p + 1))[point_rows]]
    box = []
    if prob.deriv_bounds:
        for r_ord, Brows in _derivative_rows(M, p, d, dts):
            # rows normalized to unit bounds for ADMM conditioning
            C_rows.append(Brows / float(prob.deriv_bounds[r_ord - 1]))
            box.append(np.ones(Brows.shape[0]))
    C = np.vstack(C_rows)
    n_ball = len(point_rows)
    box = np.concatenate(box) if box else np.zeros(0)
    K = C @ N
    c0 = C @ x0

    def project(V):
        Z = V.copy()
        off = Z[:n_ball] - centers
        dist = np.linalg.norm(off, axis=1)
        out = dist > radii
        Z[:n_ball][out] = centers[out] + off[out] * (radii[out] / dist[out])[:, None]
        if box.size:
            Z[n_ball:] = np.clip(Z[n_ball:], -box[:, None], box[:, None])
        return Z

    Y = -np.linalg.solve(Q, G)
    V = K @ Y + c0
    if np.max(np.abs(project(V) - V)) <= 0.0:
        X = x0 + N @ Y
        kkt = float(np.abs(Q @ Y + G).max())
        return _finish(prob, k, X.reshape(M, p + 1, n), kkt, 0)

    rho = 1.0
    KtK = K.T @ K
    fac = cho_factor(Q + rho * KtK)
    Z = project(V)
    U = np.zeros_like(Z)
    it = 0
    r_prim = r_dual = np.inf
    for it in range(1, max_iter + 1):
        Y = cho_solve(fac, -G + rho * K.T @ (Z - U - c0))
        V = K @ Y + c0
        Z_prev = Z
        Z = project(V + U)
        U = U + V - Z
        r_prim = np.abs(V - Z).max()
        r_dual = rho * np.abs(K.T @ (Z - Z_prev)).max()
        if r_prim <= tol and r_dual <= tol:
            break
        if it % 25 == 0:
            if r_prim > 10 * r_dual:
                rho *= 2.0
                U /= 2.0
            elif r_dual > 10 * r_prim:
                rho /= 2.0
                U *= 2.0
            else:
                continue
            fac = cho_factor(Q + rho * KtK)
    if r_prim > 1e-6:
        viol = np.linalg.norm(V[:n_ball] - centers, axis=1) - radii
        seg = int(seg_of[int(np.argmax(viol))]) if n_ball else None
        raise SpatialInfeasibleError(
            f"spatial QP did not reach a feasible point (residual {r_prim:.3g}); "
            f"worst segment {seg}", segment=seg,
        )
    X = x0 + N @ Y
    lam = rho * U
    kkt = float(np.abs(Q @ Y + G + K.T @ lam).max())
    return _finish(prob, k, X.reshape(M, p + 1, n), kkt, it)


def _finish(prob, k, P, kkt, iters):
    corr = prob.corridor
    slack = corr.radii[:, None] - np.linalg.norm(P - corr.centers[:, None, :], axis=2)
    min_slack = float(slack.min())
    if min_slack < 0:
        m = int(np.unravel_index(np.argmin(slack), slack.shape)[0])
        raise SpatialInfeasibleError(
            f"control point leaves sphere {m} by {-min_slack:.3g} m", segment=m
        )
    P.setflags(write=False)
    return BoundaryResult(P, objective(P, prob.durations, prob.d), kkt, iters, min_slack)


@dataclass(frozen=True)
class SpatialSolution:
    """Boundary control points ``(k_c, M, p + 1, n)`` with shared durations."""

    control_points: np.ndarray
    durations: np.ndarray
    objectives: np.ndarray
    kkt_residuals: np.ndarray = field(default=None)
    d: int = 3

    @property
    def k_c(self):
        return self.control_points.shape[0]

    @property
    def n_segments(self):
        return self.control_points.shape[1]

    @property
    def degree(self):
        return self.control_points.shape[2] - 1

    @property
    def dim(self):
        return self.control_points.shape[3]

    def content_hash(self):
        h = hashlib.sha256()
        for a in (self.control_points, self.durations):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()

    def boundary(self, k):
        return PiecewiseBezier(self.control_points[k], self.durations)


def solve_all(prob: SpatialProblem, **kw) -> SpatialSolution:
    results = [solve_boundary(prob, k, **kw) for k in range(prob.k_c)]
    cps = np.stack([r.control_points for r in results])
    cps.setflags(write=False)
    return SpatialSolution(
        cps,
        np.array(prob.durations, float),
        np.array([r.objective for r in results]),
        np.array([r.kkt_residual for r in results]),
        prob.d,
    )


def check_weights(eta, k_c, tol=1e-9):
    eta = np.asarray(eta, float).reshape(-1)
    if eta.shape != (k_c,):
        raise DomainError(f"expected {k_c} weights, got {eta.shape[0]}")
    if np.any(eta < -tol) or abs(eta.sum() - 1.0) > tol:
        raise DomainError(f"weights {eta} are not on the simplex")
    return eta


def combine(solution: SpatialSolution, eta) -> np.ndarray:
    """Control points ``sum_k eta_k P^k`` for convex weights ``eta``."""
    eta = check_weights(eta, solution.k_c)
    return np.tensordot(eta, solution.control_points, axes=1)
