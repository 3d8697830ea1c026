"""Dense revised simplex method for standard-form LPs.

    min d @ z   s.t.  K @ z = r,  z >= 0

Bland's rule is used for both pricing and the ratio test, which makes the
pivot sequence deterministic and rules out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import LPInfeasibleError, LPInternalError


@dataclass
class SimplexResult:
    z: np.ndarray
    value: float
    basis: np.ndarray
    multipliers: np.ndarray
    reduced_costs: np.ndarray
    iterations: int


class Unbounded(Exception):
    def __init__(self, ray):
        super().__init__("objective unbounded below")
        self.ray = ray


def revised_simplex(d, K, r, basis=None, max_iter=50_000, tol=1e-10):
    """Solve a standard-form LP; ``basis`` must be primal feasible if given.

    Without a starting basis a phase-one problem with artificial variables is
    solved first. Raises :class:`LPInfeasibleError` when ``K z = r, z >= 0``
    is empty and :class:`Unbounded` (carrying the improving ray) when the
    objective has no lower bound.
    """
    d = np.asarray(d, float)
    K = np.asarray(K, float)
    r = np.asarray(r, float)
    m, n = K.shape
    if basis is None:
        basis = _phase_one(K, r, max_iter, tol)
    return _iterate(d, K, r, np.array(basis, dtype=int), max_iter, tol)


def _phase_one(K, r, max_iter, tol):
    m, n = K.shape
    sign = np.where(r < 0, -1.0, 1.0)
    Ka = np.hstack([K * sign[:, None], np.eye(m)])
    ra = r * sign
    da = np.concatenate([np.zeros(n), np.ones(m)])
    res = _iterate(da, Ka, ra, np.arange(n, n + m), max_iter, tol)
    if res.value > 1e-9 * max(1.0, np.abs(ra).max()):
        raise LPInfeasibleError(
            f"equality system infeasible (phase-one value {res.value:.3g})",
            certificate=res.multipliers * sign,
        )
    basis = list(res.basis)
    # drive remaining artificials out of the basis where possible
    for pos, var in enumerate(basis):
        if var < n:
            continue
        lu = lu_factor(Ka[:, basis])
        e = np.zeros(m)
        e[pos] = 1.0
        w = lu_solve(lu, e, trans=1)
        cand = [j for j in range(n) if j not in basis and abs(w @ Ka[:, j]) > 1e-9]
        if cand:
            basis[pos] = cand[0]
    if any(v >= n for v in basis):
        # redundant rows: keep artificials pinned at zero by dropping those rows
        raise LPInternalError("rank-deficient equality system in phase one")
    return np.array(basis)


def _iterate(d, K, r, basis, max_iter, tol):
    m, n = K.shape
    scale = max(1.0, np.abs(d).max())
    for it in range(max_iter):
        B = K[:, basis]
        lu = lu_factor(B, check_finite=False)
        zB = lu_solve(lu, r, check_finite=False)
        pi = lu_solve(lu, d[basis], trans=1, check_finite=False)
        rc = d - K.T @ pi
        rc[basis] = 0.0
        candidates = np.flatnonzero(rc < -tol * scale)
        if candidates.size == 0:
            z = np.zeros(n)
            z[basis] = zB
            return SimplexResult(z, float(d @ z), basis.copy(), pi, rc, it)
        j = int(candidates[0])
        w = lu_solve(lu, K[:, j], check_finite=False)
        pos = np.flatnonzero(w > tol)
        if pos.size == 0:
            ray = np.zeros(n)
            ray[j] = 1.0
            ray[basis] = -w
            raise Unbounded(ray)
        ratios = np.maximum(zB[pos], 0.0) / w[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, best)]
        leave = int(ties[np.argmin(basis[ties])])
        basis[leave] = j
    raise LPInternalError(f"simplex did not terminate in {max_iter} iterations")
