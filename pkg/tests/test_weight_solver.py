import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from model_core import SolverControls, ValidationError
from weight_solver import (
    SpectrahedronPoint,
    TruncatedSimplexPoint,
    compute_weight,
    dual_certificate_bound,
    inner_max,
    oracle_weights,
    project_spectrahedron,
    project_truncated_simplex,
    saddle_value,
    weighted_gram,
)

S21 = np.diag([2.0, 1.0])
entries = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)


def _symmetric(A):
    return 0.5 * (A + A.T)


class TestInnerMax:
    def test_no_penalty_top_eigenvalue(self):
        solution = inner_max(S21, 0.0, 1.0)
        assert solution.value == pytest.approx(2.0, abs=1e-6)
        np.testing.assert_allclose(solution.M, np.diag([1.0, 0.0]), atol=1e-6)
        assert solution.converged

    def test_large_penalty_gives_zero(self):
        solution = inner_max(S21, 2.0, 1.0, max_iters=5000)
        assert solution.value == 0.0
        np.testing.assert_array_equal(solution.M, np.zeros((2, 2)))
        assert solution.dual_bound == pytest.approx(0.0, abs=1e-3)

    @pytest.mark.parametrize("lambda_star", [0.0, 0.5, 3.0])
    def test_zero_matrix(self, lambda_star):
        solution = inner_max(np.zeros((3, 3)), lambda_star, 1.0)
        assert solution.value == 0.0
        assert solution.gap == pytest.approx(0.0)

    def test_scales_with_trace_budget(self):
        S = np.array([[1.0, 0.4, 0.0], [0.4, 0.5, 0.2], [0.0, 0.2, 0.8]])
        small = inner_max(S, 0.1, 1.0, tolerance=1e-8, max_iters=5000)
        large = inner_max(S, 0.1, 4.0, tolerance=1e-8, max_iters=5000)
        # both values sit within their certified gaps below the same optimum
        assert abs(large.value - 4.0 * small.value) <= large.gap + 4.0 * small.gap + 1e-9

    @pytest.mark.parametrize("lambda_star", [5e-324, 1.11e-308, 1.15e-287, 5.57e-216, 1e-13])
    def test_negligible_penalty_acts_as_zero(self, lambda_star):
        S = np.array([[1.0, 0.4, -0.2], [0.4, -0.5, 0.3], [-0.2, 0.3, 2.0]])
        solution = inner_max(S, lambda_star, 1.0)
        top = float(np.linalg.eigvalsh(S)[-1])
        assert solution.value == pytest.approx(top, abs=1e-6)
        assert solution.value <= solution.dual_bound + 1e-12
        assert np.all(np.isfinite(solution.M))

    def test_rejects_asymmetric_input(self):
        with pytest.raises(ValidationError):
            inner_max(np.array([[1.0, 2.0], [0.0, 1.0]]), 0.1, 1.0)

    @given(A=arrays(float, (3, 3), elements=entries), lam=st.floats(0.0, 2.0), r_bound=st.floats(0.25, 2.0))
    @settings(deadline=None, max_examples=40)
    def test_certified_gap(self, A, lam, r_bound):
        S = _symmetric(A)
        solution = inner_max(S, lam, r_bound)
        assert solution.value >= 0.0
        assert solution.value <= solution.dual_bound + 1e-12
        SpectrahedronPoint(M=solution.M, r_bound=r_bound)
        assert np.max(np.abs(solution.dual)) <= lam + 1e-12


class TestDualBound:
    def test_zero_dual(self):
        S = np.array([[1.0, 0.5], [0.5, -2.0]])
        expected = 2.0 * max(np.linalg.eigvalsh(S)[-1], 0.0)
        assert dual_certificate_bound(S, np.zeros((2, 2)), 2.0, 0.0) == pytest.approx(expected)

    def test_matches_inner_value(self):
        assert dual_certificate_bound(S21, S21, 1.0, 2.0) == 0.0

    def test_negative_semidefinite(self):
        assert dual_certificate_bound(-np.eye(3), np.zeros((3, 3)), 1.0, 0.0) == 0.0

    def test_infeasible_dual(self):
        with pytest.raises(ValidationError):
            dual_certificate_bound(S21, 3.0 * np.eye(2), 1.0, 2.0)

    @given(A=arrays(float, (3, 3), elements=entries), B=arrays(float, (3, 3), elements=entries),
           lam=st.floats(0.0, 2.0))
    @settings(deadline=None, max_examples=40)
    def test_weak_duality(self, A, B, lam):
        S = _symmetric(A)
        U = np.clip(_symmetric(B), -lam, lam)
        solution = inner_max(S, lam, 1.0)
        assert solution.value <= dual_certificate_bound(S, U, 1.0, lam) + 1e-9


class TestProjections:
    def test_spectrahedron_feasible_unchanged(self):
        A = np.array([[0.5, 0.1], [0.1, 0.3]])
        np.testing.assert_allclose(project_spectrahedron(A, 1.0).M, A, atol=1e-12)

    def test_spectrahedron_negative_part_removed(self):
        np.testing.assert_array_equal(project_spectrahedron(np.diag([-1.0, -2.0]), 3.0).M, np.zeros((2, 2)))

    def test_spectrahedron_trace_budget(self):
        np.testing.assert_allclose(project_spectrahedron(np.diag([3.0, 1.0]), 2.0).M, np.diag([2.0, 0.0]),
                                   atol=1e-12)

    def test_simplex_feasible_unchanged(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_array_equal(project_truncated_simplex(v, 0.4).w, v)

    def test_simplex_cap_forces_uniform(self):
        np.testing.assert_allclose(project_truncated_simplex(np.array([1.0, 0.0]), 0.0).w, [0.5, 0.5])

    @pytest.mark.parametrize("n", [3, 7, 13, 49, 1000])
    def test_simplex_without_truncation_is_uniform(self, n):
        v = np.linspace(-1.0, 2.0, n)
        point = project_truncated_simplex(v, 0.0)
        np.testing.assert_allclose(point.w, np.full(n, 1.0 / n))
        np.testing.assert_allclose(project_truncated_simplex(np.ones(n), 0.0).w, np.full(n, 1.0 / n))

    def test_simplex_three_points(self):
        w = project_truncated_simplex(np.array([1.0, 0.0, 0.0]), 1.0 / 3.0).w
        np.testing.assert_allclose(w, [0.5, 0.25, 0.25], atol=1e-12)

    @given(v=arrays(float, st.integers(1, 30), elements=st.floats(-10.0, 10.0)), eps=st.floats(0.0, 0.49))
    @settings(deadline=None)
    def test_simplex_feasible_and_idempotent(self, v, eps):
        point = project_truncated_simplex(v, eps)
        assert point.w.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(point.w >= 0.0)
        assert np.all(point.w <= point.cap + 1e-12)
        np.testing.assert_allclose(project_truncated_simplex(point.w, eps).w, point.w, atol=1e-9)

    @given(A=arrays(float, (3, 3), elements=entries), r_bound=st.floats(0.1, 4.0))
    @settings(deadline=None)
    def test_spectrahedron_feasible(self, A, r_bound):
        point = project_spectrahedron(_symmetric(A), r_bound)
        assert np.trace(point.M) <= r_bound + 1e-9
        assert np.linalg.eigvalsh(point.M)[0] >= -1e-9

    def test_truncated_point_validation(self):
        with pytest.raises(ValidationError):
            TruncatedSimplexPoint(w=np.array([0.9, 0.1]), epsilon=0.1)
        with pytest.raises(ValidationError):
            TruncatedSimplexPoint(w=np.array([0.5, 0.4]), epsilon=0.1)


class TestComputeWeight:
    def test_zero_data(self):
        solution = compute_weight(np.zeros((2, 2)), 0.5, 0.0, 0.0, 1.0)
        assert solution.value == 0.0
        assert solution.success
        np.testing.assert_allclose(solution.w_hat.w, [0.5, 0.5])

    def test_downweights_large_row(self):
        X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 100.0]])
        ctrl = SolverControls(max_outer_iters=500)
        solution = compute_weight(X, 0.0, 10.0, 1.0 / 3.0, 1.0, ctrl)
        uniform = saddle_value(X, np.full(3, 1.0 / 3.0), 0.0, 1.0)
        assert solution.w_hat.w[2] < solution.w_hat.w[0]
        assert solution.w_hat.w[2] < 0.05
        assert solution.value < uniform.value
        assert solution.value <= 1.05
        assert solution.success

    def test_failure_is_reported_not_raised(self):
        X = np.random.default_rng(0).standard_normal((20, 3))
        solution = compute_weight(X, 0.1, 0.0, 0.1, 1.0, SolverControls(max_outer_iters=20))
        assert not solution.success
        assert solution.value > 0.0
        assert solution.w_hat.n == 20

    def test_bounds_bracket_value(self):
        X = np.random.default_rng(1).standard_normal((40, 4))
        X[:3] *= 8.0
        solution = compute_weight(X, 0.05, 100.0, 0.1, 1.0, SolverControls(max_outer_iters=100))
        assert solution.lower_bound <= solution.value + 1e-9
        assert solution.value <= solution.certificate.upper_bound + 1e-12
        assert np.max(np.abs(solution.certificate.U)) <= 0.05 + 1e-12

    def test_invariant_to_trace_budget(self):
        X = np.random.default_rng(2).standard_normal((30, 3))
        ctrl = SolverControls(max_outer_iters=50, gap_tolerance=1e-12)
        one = compute_weight(X, 0.0, 1.0, 0.1, 1.0, ctrl)
        four = compute_weight(X, 0.0, 4.0, 0.1, 4.0, ctrl)
        assert four.value == pytest.approx(4.0 * one.value, rel=1e-6)

    def test_rejects_bad_parameters(self):
        X = np.ones((4, 3))
        with pytest.raises(ValidationError):
            compute_weight(X, -1.0, 1.0, 0.1, 1.0)
        with pytest.raises(ValidationError):
            compute_weight(X, 0.1, 1.0, 1.0, 1.0)


class TestOracleWeights:
    def test_raw_weights(self):
        w = oracle_weights(10, [2, 5], 0.2)
        assert w[2] == 0.0 and w[5] == 0.0
        assert w.sum() == pytest.approx(1.0)

    def test_raw_weights_sum_at_least_one(self):
        w = oracle_weights(10, [2], 0.3)
        assert w.sum() == pytest.approx(9.0 / 7.0)

    def test_normalized_weights_in_simplex(self):
        w = oracle_weights(10, [2], 0.3, normalize=True)
        point = TruncatedSimplexPoint(w=w, epsilon=0.3)
        assert point.w[2] == 0.0
        assert np.all(w <= oracle_weights(10, [2], 0.3))


def test_weighted_gram():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(weighted_gram(X, np.array([0.5, 0.5])), 0.5 * (X.T @ X))
