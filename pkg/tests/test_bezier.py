import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from oracles import de_casteljau, finite_difference
from vtube.bezier import (
    BasisMatrices,
    BezierSegment,
    PiecewiseBezier,
    derivative,
    derivative_control_points,
    eval_matrix_form,
    eval_trajectory,
    evaluate,
    hull_membership,
    power_basis_matrix,
    sample,
)
from vtube.errors import AssemblyError, DomainError

coords = st.floats(-10, 10, allow_nan=False)


def segments(min_p=1, max_p=6, dim=3):
    return st.integers(min_p, max_p).flatmap(
        lambda p: st.tuples(
            arrays(float, (p + 1, dim), elements=coords),
            st.floats(0.1, 5.0),
        )
    ).map(lambda a: BezierSegment(*a))


def in_hull(points, x, tol):
    # x is a convex combination of points, up to tol, via an LP
    k = len(points)
    A_eq = np.vstack([points.T, np.ones(k)])
    res = linprog(np.zeros(k), A_eq=A_eq, b_eq=np.append(x, 1.0), bounds=(0, None),
                  method="highs")
    if res.status == 0:
        return True
    # fall back to the distance from the hull for near-degenerate hulls
    from scipy.optimize import nnls

    w = 1e6
    _, resid = nnls(np.vstack([points.T, w * np.ones(k)]), np.append(x, w))
    return resid <= tol


class TestSegmentEval:
    def test_endpoints(self):
        seg = BezierSegment([[0, 0], [1, 2], [3, 1], [4, 4]], 2.0)
        assert np.array_equal(evaluate(seg, 0.0), [0, 0])
        assert np.array_equal(evaluate(seg, 2.0), [4, 4])

    def test_scalar_cubic_midpoint(self):
        seg = BezierSegment([0, 0, 1, 1], 1.0)
        # frozen de Casteljau result: 0.5
        assert de_casteljau([0, 0, 1, 1], 0.5) == pytest.approx(0.5, abs=1e-15)
        assert evaluate(seg, 0.5)[0] == pytest.approx(0.5, abs=1e-15)

    def test_bit_stable(self):
        seg = BezierSegment(np.arange(12.0).reshape(4, 3) ** 1.5, 1.3)
        assert np.array_equal(evaluate(seg, 0.77), evaluate(seg, 0.77))

    @pytest.mark.parametrize("t", [-1e-3, 1.0 + 1e-3])
    def test_outside_domain(self, t):
        with pytest.raises(DomainError):
            evaluate(BezierSegment([0, 1], 1.0), t)

    @given(segments(), st.floats(0, 1))
    def test_matches_de_casteljau(self, seg, u):
        t = u * seg.duration
        assert np.allclose(evaluate(seg, t), de_casteljau(seg.control_points, u),
                           atol=1e-9, rtol=1e-12)

    @given(segments(3, 3), st.floats(0, 1))
    def test_matrix_form_agrees_cubic(self, seg, u):
        t = u * seg.duration
        assert np.allclose(evaluate(seg, t), eval_matrix_form(seg, t), atol=1e-12, rtol=0)


class TestBasisMatrices:
    def test_cubic_matrix(self):
        expected = np.array([[1, 0, 0, 0], [-3, 3, 0, 0], [3, -6, 3, 0], [-1, 3, -3, 1]])
        assert np.array_equal(power_basis_matrix(3), expected)
        assert np.array_equal(BasisMatrices.for_degree(3).coefficients, expected)

    def test_scaling(self):
        B = BasisMatrices.for_degree(2, dt=2.0)
        assert np.allclose(np.diag(B.scaling), [1, 0.5, 0.25])

    @pytest.mark.parametrize("p", [1, 2, 4, 5, 7])
    def test_rows_sum_like_binomial(self, p):
        # the Bernstein basis sums to 1, so column sums of M give [1, 0, ..., 0]
        assert np.array_equal(power_basis_matrix(p).sum(axis=1), np.eye(p + 1)[0])


class TestDerivative:
    def test_cubic_example(self):
        d = derivative(BezierSegment([0, 1, 2, 3], 2.0))
        assert d.degree == 2
        assert np.allclose(d.control_points[:, 0], [1.5, 1.5, 1.5])
        # finite-difference oracle on the original curve
        seg = BezierSegment([0, 1, 2, 3], 2.0)
        for t in (0.3, 1.0, 1.7):
            fd = finite_difference(lambda s: evaluate(seg, s), t)
            assert fd[0] == pytest.approx(1.5, abs=1e-7)

    def test_constant(self):
        d = derivative(BezierSegment(np.ones((4, 3)), 1.0))
        assert np.all(d.control_points == 0)

    def test_linear(self):
        d = derivative(BezierSegment([[1.0], [4.0]], 3.0))
        assert d.degree == 0 and d.control_points[0, 0] == pytest.approx(1.0)

    def test_degree_zero_raises(self):
        with pytest.raises(DomainError):
            derivative(BezierSegment([[1.0, 2.0]], 1.0))

    @given(segments(2, 6))
    def test_twice_equals_second_order(self, seg):
        dd = derivative(derivative(seg)).control_points
        direct = derivative_control_points(seg.control_points, seg.duration, 2)
        assert np.allclose(dd, direct, rtol=1e-10, atol=1e-8)

    @given(segments(1, 6), st.floats(0.05, 0.95))
    def test_finite_difference(self, seg, u):
        t = u * seg.duration
        fd = finite_difference(lambda s: evaluate(seg, s), t, h=1e-6 * seg.duration)
        an = evaluate(derivative(seg), t)
        scale = 1 + np.abs(an).max()
        assert np.allclose(fd, an, atol=1e-4 * scale)


class TestHull:
    def test_center(self):
        assert hull_membership(BezierSegment(np.zeros((4, 3)) + 2.0, 1.0), [2, 2, 2], 0.1)

    def test_outside_point(self):
        P = np.zeros((4, 3))
        P[2] = [3.0, 0, 0]
        assert not hull_membership(BezierSegment(P, 1.0), [0, 0, 0], 2.0)

    def test_inscribed_simplex_sampled(self, rng):
        center, r = np.array([1.0, -2.0, 0.5]), 2.0
        tet = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)
        P = center + r * tet[[0, 1, 2, 3, 0, 2]]
        seg = BezierSegment(P, 1.5)
        assert hull_membership(seg, center, r, tol=1e-12)
        pts = np.array([evaluate(seg, t) for t in np.linspace(0, 1.5, 1000)])
        assert np.all(np.linalg.norm(pts - center, axis=1) <= r + 1e-12)

    @given(segments(1, 5))
    def test_sampled_curve_in_control_hull(self, seg):
        ts = np.linspace(0, seg.duration, 1000)
        traj = PiecewiseBezier(seg.control_points[None], [seg.duration])
        pts = sample(traj, ts)
        P = seg.control_points
        # check a spread of samples by LP hull membership (1e-9 m)
        for x in pts[::97]:
            assert in_hull(P, x, 1e-9)
        lo, hi = P.min(axis=0), P.max(axis=0)
        assert np.all(pts >= lo - 1e-9) and np.all(pts <= hi + 1e-9)


class TestPiecewise:
    @pytest.fixture
    def traj(self):
        P = np.array([
            [[0, 0], [1, 0], [2, 1], [3, 1]],
            [[3, 1], [4, 1], [5, 3], [6, 3]],
        ], float)
        return PiecewiseBezier(P, [1.0, 1.0])

    def test_endpoints(self, traj):
        assert np.array_equal(eval_trajectory(traj, 0.0), [0, 0])
        assert np.array_equal(eval_trajectory(traj, traj.total_time), [6, 3])

    def test_right_continuous_dispatch(self, traj):
        assert traj.locate(1.0) == (1, 0.0)
        assert traj.locate(2.0)[0] == 1

    def test_joint_velocity_continuity(self, traj):
        left = evaluate(derivative(traj.segments[0]), 1.0)
        right = evaluate(derivative(traj.segments[1]), 0.0)
        assert np.allclose(left, right)
        assert np.allclose(eval_trajectory(traj, 1.0, 1), right)

    def test_outside(self, traj):
        with pytest.raises(DomainError):
            eval_trajectory(traj, 2.5)
        with pytest.raises(DomainError):
            eval_trajectory(traj, -0.1)

    def test_mismatched_durations(self):
        with pytest.raises(AssemblyError):
            PiecewiseBezier(np.zeros((2, 4, 3)), [1.0])

    def test_from_segments_roundtrip(self, traj):
        again = PiecewiseBezier.from_segments(traj.segments)
        assert np.array_equal(again.control_points, traj.control_points)

    def test_from_segments_mixed_degree(self):
        with pytest.raises(AssemblyError):
            PiecewiseBezier.from_segments([BezierSegment([0, 1], 1), BezierSegment([0, 1, 2], 1)])

    @given(st.integers(0, 3), st.floats(0, 1))
    def test_sample_matches_scalar_eval(self, order, u):
        P = np.array([[[0, 0, 0], [1, 2, 0], [2, 2, 1], [3, 1, 1], [4, 0, 2], [5, 0, 2]],
                      [[5, 0, 2], [6, 0, 2], [7, 1, 3], [8, 3, 3], [9, 3, 4], [10, 3, 4]]],
                     float)
        traj = PiecewiseBezier(P, [1.3, 0.7])
        t = u * traj.total_time
        assert np.allclose(sample(traj, [t], order)[0], eval_trajectory(traj, t, order),
                           atol=1e-9)
