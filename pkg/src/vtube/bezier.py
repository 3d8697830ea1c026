"""Bezier segments and piecewise Bezier trajectories.

A segment of degree ``p`` on ``[0, dt]`` is

    h(t) = sum_k B_{p,k}(t) P_k,   B_{p,k}(t) = C(p,k) (t/dt)^k (1 - t/dt)^(p-k)

and its derivative is again a Bezier segment with control points
``q_k = p / dt * (P_{k+1} - P_k)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .errors import AssemblyError, DomainError

_T_TOL = 1e-12


def power_basis_matrix(p: int) -> np.ndarray:
    """Bernstein-to-power change of basis for degree ``p``.

    Row ``i`` holds the coefficients of ``u**i`` in each Bernstein polynomial,
    so ``h(t) = beta(t) @ S_dt @ M @ P`` with ``beta(t) = [1, t, ..., t**p]``.
    For ``p = 3`` this is the familiar cubic matrix
    ``[[1,0,0,0], [-3,3,0,0], [3,-6,3,0], [-1,3,-3,1]]``.
    """
    M = np.zeros((p + 1, p + 1))
    for j in range(p + 1):
        for i in range(j, p + 1):
            M[i, j] = comb(p, j) * comb(p - j, i - j) * (-1) ** (i - j)
    return M


def duration_scaling(p: int, dt: float) -> np.ndarray:
    """Diagonal matrix ``diag(1, 1/dt, ..., 1/dt**p)``."""
    return np.diag(float(dt) ** -np.arange(p + 1, dtype=float))


@dataclass(frozen=True)
class BasisMatrices:
    p: int
    coefficients: np.ndarray
    dt: float = 1.0

    @classmethod
    def for_degree(cls, p, dt=1.0):
        return cls(p, power_basis_matrix(p), float(dt))

    @property
    def scaling(self):
        return duration_scaling(self.p, self.dt)


def bernstein(p: int, k: int, u):
    return comb(p, k) * u**k * (1.0 - u) ** (p - k)


def difference_matrix(p: int, order: int) -> np.ndarray:
    """Forward difference operator of given order on ``p + 1`` control points."""
    D = np.eye(p + 1)
    for _ in range(order):
        D = D[1:] - D[:-1]
    return D


def derivative_control_points(P, dt, order):
    """Control points of the ``order``-th derivative of a segment."""
    P = np.asarray(P, dtype=float)
    p = P.shape[0] - 1
    if order > p:
        return np.zeros((1,) + P.shape[1:])
    scale = factorial(p) / factorial(p - order) / dt**order
    return scale * np.tensordot(difference_matrix(p, order), P, axes=1)


@dataclass(frozen=True)
class BezierSegment:
    """One Bezier piece. ``control_points`` has shape ``(p + 1, n)``."""

    control_points: np.ndarray
    duration: float

    def __post_init__(self):
        P = np.array(self.control_points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.ndim != 2 or P.shape[0] < 1:
            raise DomainError("control points must be a (p+1, n) array")
        if not self.duration > 0:
            raise DomainError(f"duration must be positive, got {self.duration}")
        P.setflags(write=False)
        object.__setattr__(self, "control_points", P)
        object.__setattr__(self, "duration", float(self.duration))

    @property
    def degree(self):
        return self.control_points.shape[0] - 1

    @property
    def dim(self):
        return self.control_points.shape[1]


def evaluate(seg: BezierSegment, t: float) -> np.ndarray:
    """Evaluate ``seg`` at local time ``t`` in ``[0, dt]`` (Bernstein sum)."""
    if not (-_T_TOL <= t <= seg.duration + _T_TOL):
        raise DomainError(f"t={t} outside [0, {seg.duration}]")
    u = min(max(t / seg.duration, 0.0), 1.0)
    p = seg.degree
    if u == 0.0:
        return seg.control_points[0].copy()
    if u == 1.0:
        return seg.control_points[p].copy()
    w = np.array([bernstein(p, k, u) for k in range(p + 1)])
    return w @ seg.control_points


def eval_matrix_form(seg: BezierSegment, t: float) -> np.ndarray:
    """Evaluate through the power basis, ``beta(t) S_dt M P``."""
    if not (-_T_TOL <= t <= seg.duration + _T_TOL):
        raise DomainError(f"t={t} outside [0, {seg.duration}]")
    p = seg.degree
    beta = float(t) ** np.arange(p + 1)
    return beta @ duration_scaling(p, seg.duration) @ power_basis_matrix(p) @ seg.control_points


def derivative(seg: BezierSegment) -> BezierSegment:
    if seg.degree < 1:
        raise DomainError("derivative needs degree >= 1")
    q = derivative_control_points(seg.control_points, seg.duration, 1)
    return BezierSegment(q, seg.duration)


def hull_membership(seg: BezierSegment, center, radius, tol=0.0) -> bool:
    """True iff every control point lies in the closed ball ``(center, radius)``."""
    d = np.linalg.norm(seg.control_points - np.asarray(center, dtype=float), axis=1)
    return bool(np.all(d <= radius + tol))


@dataclass(frozen=True)
class PiecewiseBezier:
    """Concatenation of ``M`` segments of equal degree.

    Stored as a ``(M, p + 1, n)`` control point array and ``(M,)`` durations.
    Power-basis coefficients are cached for fast repeated evaluation.
    """

    control_points: np.ndarray
    durations: np.ndarray
    _coeffs: np.ndarray = field(init=False, repr=False, compare=False)
    _breaks: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        P = np.array(self.control_points, dtype=float)
        dts = np.array(self.durations, dtype=float).reshape(-1)
        if P.ndim != 3 or P.shape[0] != dts.shape[0]:
            raise AssemblyError(
                f"control points {P.shape} do not match {dts.shape[0]} durations"
            )
        if np.any(~(dts > 0)):
            raise DomainError("all durations must be positive")
        P.setflags(write=False)
        dts.setflags(write=False)
        object.__setattr__(self, "control_points", P)
        object.__setattr__(self, "durations", dts)
        p = P.shape[1] - 1
        Mb = power_basis_matrix(p)
        scale = dts[:, None] ** -np.arange(p + 1)[None, :]
        coeffs = scale[:, :, None] * np.einsum("ij,mjn->min", Mb, P)
        object.__setattr__(self, "_coeffs", coeffs)
        object.__setattr__(self, "_breaks", np.concatenate([[0.0], np.cumsum(dts)]))

    @classmethod
    def from_segments(cls, segments):
        segments = list(segments)
        degrees = {s.degree for s in segments}
        dims = {s.dim for s in segments}
        if len(degrees) != 1 or len(dims) != 1:
            raise AssemblyError("segments must share degree and dimension")
        return cls(
            np.stack([s.control_points for s in segments]),
            np.array([s.duration for s in segments]),
        )

    @property
    def segments(self):
        return [BezierSegment(P, dt) for P, dt in zip(self.control_points, self.durations)]

    @property
    def degree(self):
        return self.control_points.shape[1] - 1

    @property
    def dim(self):
        return self.control_points.shape[2]

    @property
    def n_segments(self):
        return self.control_points.shape[0]

    @property
    def total_time(self):
        return float(self._breaks[-1])

    @property
    def breaks(self):
        return self._breaks

    def locate(self, t):
        """Segment index and local time; ties at joints go to the later segment."""
        T = self._breaks[-1]
        if not (-_T_TOL <= t <= T + _T_TOL * max(1.0, T)):
            raise DomainError(f"t={t} outside [0, {T}]")
        m = int(np.searchsorted(self._breaks, t, side="right")) - 1
        m = min(max(m, 0), self.n_segments - 1)
        return m, min(max(t - self._breaks[m], 0.0), self.durations[m])

    def __call__(self, t, order=0):
        return eval_trajectory(self, t, order)


def eval_trajectory(traj: PiecewiseBezier, t: float, order: int = 0) -> np.ndarray:
    """Evaluate the ``order``-th time derivative of ``traj`` at global time ``t``."""
    if order < 0:
        raise DomainError("order must be non-negative")
    m, tau = traj.locate(t)
    p = traj.degree
    if order == 0 and tau == 0.0:
        return traj.control_points[m, 0].copy()
    if order == 0 and tau == traj.durations[m]:
        return traj.control_points[m, p].copy()
    if order > p:
        return np.zeros(traj.dim)
    C = traj._coeffs[m]
    i = np.arange(order, p + 1)
    fall = np.array([factorial(k) / factorial(k - order) for k in i])
    powers = tau ** (i - order)
    return (fall * powers) @ C[order:]


def sample(traj: PiecewiseBezier, ts, order=0) -> np.ndarray:
    """Vectorized evaluation at many global times; returns ``(len(ts), n)``."""
    ts = np.asarray(ts, dtype=float)
    T = traj.total_time
    if np.any(ts < -_T_TOL) or np.any(ts > T + _T_TOL * max(1.0, T)):
        raise DomainError("sample times outside trajectory domain")
    m = np.clip(np.searchsorted(traj.breaks, ts, side="right") - 1, 0, traj.n_segments - 1)
    tau = np.clip(ts - traj.breaks[m], 0.0, traj.durations[m])
    p = traj.degree
    if order > p:
        return np.zeros((ts.size, traj.dim))
    i = np.arange(order, p + 1)
    fall = np.array([factorial(k) / factorial(k - order) for k in i])
    basis = fall[None, :] * tau[:, None] ** (i - order)[None, :]
    return np.einsum("ti,tin->tn", basis, traj._coeffs[m][:, order:, :])
