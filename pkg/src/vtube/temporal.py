"""Time-allocation linear program and its parametric family.

For fixed control points the segment durations ``x = (dt_1, ..., dt_M)``
solve

    min  sum(x)
    s.t. A_ub @ x <= b_ub     velocity bounds  p |P_{m,k+1} - P_{m,k}| <= v dt_m
         A_eq @ x == 0        C1 joints        a_m dt_{m+1} - a'_{m+1} dt_m = 0
         x >= t_min

Only ``b_ub`` and ``A_eq`` depend on the control points, and they do so
linearly, so for control points ``sum_k theta_k P^k`` the LP data is the same
convex combination of the boundary LP data.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssemblyError,
    ConfigurationError,
    DomainError,
    LPInfeasibleError,
    LPInternalError,
)
from .simplex import Unbounded, revised_simplex

T_MIN = 1e-3


@dataclass(frozen=True)
class TimeLP:
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    t_min: float = T_MIN
    dim: int = 1

    @property
    def n_vars(self):
        return self.A_ub.shape[1]

    @property
    def c(self):
        return np.ones(self.n_vars)


@dataclass
class LPSolution:
    x: np.ndarray
    value: float
    duals_ub: np.ndarray
    duals_lb: np.ndarray
    duals_eq: np.ndarray
    cs_residual: float
    iterations: int
    basis: np.ndarray = field(repr=False, default=None)


def _check_vmax(v_max, n):
    v = np.broadcast_to(np.asarray(v_max, float), (n,))
    if np.any(~(v > 0)):
        raise ConfigurationError(f"v_max must be positive componentwise, got {v}")
    return v


def velocity_rows(M, p, n, v_max):
    """The theta-independent matrix ``A_ub`` (two rows per derivative point)."""
    v = _check_vmax(v_max, n)
    rows = np.zeros((M * p * n * 2, M))
    i = 0
    for m in range(M):
        for _k in range(p):
            for j in range(n):
                rows[i, m] = -v[j]
                rows[i + 1, m] = -v[j]
                i += 2
    return rows


def build_lp(control_points, v_max, p=None, t_min=T_MIN) -> TimeLP:
    """Assemble the time LP for one set of control points ``(M, p + 1, n)``."""
    P = np.asarray(control_points, float)
    if P.ndim == 2:
        P = P[:, :, None]
    M, p1, n = P.shape
    if p is None:
        p = p1 - 1
    if p != p1 - 1:
        raise ConfigurationError(f"degree {p} does not match {p1} control points")
    A_ub = velocity_rows(M, p, n, v_max)
    diff = p * np.diff(P, axis=1)  # (M, p, n)
    b_ub = np.stack([-diff, diff], axis=-1).reshape(-1)
    A_eq = np.zeros(((M - 1) * n, M))
    for m in range(M - 1):
        a_end = p * (P[m, p] - P[m, p - 1])
        a_start = p * (P[m + 1, 1] - P[m + 1, 0])
        for j in range(n):
            A_eq[m * n + j, m + 1] = a_end[j]
            A_eq[m * n + j, m] = -a_start[j]
    return TimeLP(A_ub, b_ub, A_eq, t_min, n)


RANK_TOL = 1e-9


def _reduce_joint_rows(lp: TimeLP):
    """Collapse each joint's per-component continuity rows to their common row.

    At a joint every component row is a multiple of one relation between two
    neighboring durations. Rounding makes such rows slightly inconsistent
    when a velocity component passes through zero, which an exact solver
    reads as infeasibility. A rank-1 group is replaced by its dominant
    singular direction and a vanishing group is dropped; a genuinely rank-2
    group is kept as is. Returns the reduced rows and the map ``R`` with
    ``A_red = R.T @ A_eq``.
    """
    A = lp.A_eq
    n = max(int(lp.dim), 1)
    if A.shape[0] == 0 or A.shape[0] % n:
        return A, np.eye(A.shape[0])
    scale = max(float(np.abs(A).max()), 1e-300)
    G = A.shape[0] // n
    blocks = A.reshape(G, n, A.shape[1])
    U, sv, _ = np.linalg.svd(blocks, full_matrices=False)
    rows, cols = [], []
    for g in range(G):
        if sv[g, 0] <= 1e-12 * scale:
            continue
        if n > 1 and sv[g, 1] > RANK_TOL * sv[g, 0]:
            for j in range(n):
                e = np.zeros(A.shape[0])
                e[g * n + j] = 1.0
                cols.append(e)
            rows.extend(blocks[g])
            continue
        e = np.zeros(A.shape[0])
        e[g * n:(g + 1) * n] = U[g, :, 0]
        cols.append(e)
        rows.append(U[g, :, 0] @ blocks[g])
    if not rows:
        return np.zeros((0, A.shape[1])), np.zeros((A.shape[0], 0))
    return np.array(rows), np.array(cols).T


def _dual_standard_form(lp: TimeLP, A_eq):
    """Dual of the time LP as ``min d z, K z = -c, z >= 0``.

    Columns are ordered (velocity rows, lower-bound rows, eq+, eq-). The
    primal optimum is the simplex multiplier vector of this problem.
    """
    M = lp.n_vars
    K = np.hstack([lp.A_ub.T, -np.eye(M), A_eq.T, -A_eq.T])
    d = np.concatenate([
        lp.b_ub,
        np.full(M, -lp.t_min),
        np.zeros(2 * A_eq.shape[0]),
    ])
    return d, K, -lp.c


def solve_lp(lp: TimeLP, basis=None) -> LPSolution:
    """Solve the time LP with the revised simplex method on its dual.

    The dual has only ``M`` equality rows, and the lower-bound columns give an
    immediate feasible basis, so no phase one is needed. ``basis`` may carry a
    previous optimal basis as a warm start; it is used only if still feasible.
    """
    A_eq, R = _reduce_joint_rows(lp)
    d, K, r = _dual_standard_form(lp, A_eq)
    M = lp.n_vars
    n_ub = lp.A_ub.shape[0]
    n_eq = A_eq.shape[0]
    start = np.arange(n_ub, n_ub + M)
    if basis is not None and len(basis) == M and max(basis) < K.shape[1]:
        try:
            zB = np.linalg.solve(K[:, basis], r)
            if np.all(zB >= -1e-12):
                start = np.array(basis)
        except np.linalg.LinAlgError:
            pass
    try:
        res = revised_simplex(d, K, r, basis=start)
    except Unbounded as exc:
        ray = exc.ray
        u = np.concatenate([ray[:n_ub], ray[n_ub:n_ub + M]])
        w = R @ (ray[n_ub + M:n_ub + M + n_eq] - ray[n_ub + M + n_eq:])
        raise LPInfeasibleError("time allocation LP is infeasible", certificate=(u, w)) from None
    x = res.multipliers
    z = res.z
    u_ub, u_lb = z[:n_ub], z[n_ub:n_ub + M]
    w = R @ (z[n_ub + M:n_ub + M + n_eq] - z[n_ub + M + n_eq:])
    slack_ub = lp.b_ub - lp.A_ub @ x
    slack_lb = x - lp.t_min
    scale = max(1.0, float(np.abs(lp.b_ub).max(initial=0.0)))
    if slack_ub.min(initial=0.0) < -1e-7 * scale or slack_lb.min() < -1e-9:
        raise LPInternalError("simplex returned a primal-infeasible point")
    cs = max(
        float(np.abs(u_ub * slack_ub).max(initial=0.0)),
        float(np.abs(u_lb * slack_lb).max(initial=0.0)),
    )
    return LPSolution(x, float(x.sum()), u_ub, u_lb, w, cs, res.iterations, res.basis)


@dataclass(frozen=True)
class ParametricTimeLP:
    """Boundary LP data ``(b_ub^k, A_eq^k)`` and the convex assembly in theta."""

    A_ub: np.ndarray
    b_ub: np.ndarray  # (k_c, rows)
    A_eq: np.ndarray  # (k_c, rows, M)
    t_min: float = T_MIN
    source_hash: str = ""
    dim: int = 1

    @property
    def k_c(self):
        return self.b_ub.shape[0]

    @property
    def n_vars(self):
        return self.A_ub.shape[1]

    def at(self, theta) -> TimeLP:
        theta = check_simplex(theta, self.k_c)
        return TimeLP(
            self.A_ub,
            np.tensordot(theta, self.b_ub, axes=1),
            np.tensordot(theta, self.A_eq, axes=1),
            self.t_min,
            self.dim,
        )

    def boundary(self, k) -> TimeLP:
        return TimeLP(self.A_ub, self.b_ub[k], self.A_eq[k], self.t_min, self.dim)

    def content_hash(self):
        h = hashlib.sha256()
        for a in (self.A_ub, self.b_ub, self.A_eq):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        h.update(repr(self.t_min).encode())
        return h.hexdigest()


def check_simplex(theta, k_c, tol=1e-9):
    theta = np.asarray(theta, float).reshape(-1)
    if theta.shape != (k_c,):
        raise DomainError(f"theta must have {k_c} entries, got {theta.size}")
    if np.any(theta < -tol) or abs(theta.sum() - 1.0) > tol:
        raise DomainError(f"theta {theta} is not on the simplex")
    return theta


def assemble_parametric(boundary_lps, spatial=None) -> ParametricTimeLP:
    lps = list(boundary_lps)
    if not lps:
        raise AssemblyError("no boundary LPs")
    ref = lps[0]
    for lp in lps[1:]:
        if (lp.A_ub.shape != ref.A_ub.shape or lp.A_eq.shape != ref.A_eq.shape
                or lp.b_ub.shape != ref.b_ub.shape):
            raise AssemblyError("boundary LPs differ in dimensions")
        if (not np.array_equal(lp.A_ub, ref.A_ub) or lp.t_min != ref.t_min
                or lp.dim != ref.dim):
            raise AssemblyError("boundary LPs differ in velocity limits or t_min")
    return ParametricTimeLP(
        ref.A_ub,
        np.stack([lp.b_ub for lp in lps]),
        np.stack([lp.A_eq for lp in lps]),
        ref.t_min,
        spatial.content_hash() if spatial is not None else "",
        ref.dim,
    )


def parametric_from_spatial(spatial, v_max, t_min=T_MIN) -> ParametricTimeLP:
    lps = [build_lp(spatial.control_points[k], v_max, spatial.degree, t_min)
           for k in range(spatial.k_c)]
    return assemble_parametric(lps, spatial)


def value_function(plp: ParametricTimeLP, theta, basis=None):
    """Exact optimal total time ``V*(theta)`` (and the full LP solution)."""
    sol = solve_lp(plp.at(theta), basis=basis)
    return sol.value, sol
