import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from model_core import ValidationError
from oracle_verify import brute_inner_max, brute_simplex_min, finite_diff, grid_resolution, quadratic_branch_1d
from weight_solver import inner_max

entries = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)


def _symmetric(A):
    return 0.5 * (A + A.T)


class TestBruteInnerMax:
    def test_top_eigenvalue(self):
        assert brute_inner_max(np.diag([2.0, 1.0]), 0.0, 1.0) == pytest.approx(2.0, abs=1e-3)

    def test_zero_matrix(self):
        assert brute_inner_max(np.zeros((3, 3)), 0.5, 1.0) == 0.0

    def test_rejects_large_matrices(self):
        with pytest.raises(ValidationError):
            brute_inner_max(np.eye(4), 0.1, 1.0)

    def test_refinement_never_decreases(self):
        S = np.array([[1.0, 0.7], [0.7, -0.4]])
        coarse = brute_inner_max(S, 0.3, 1.0, grid=90, eig_grid=20)
        fine = brute_inner_max(S, 0.3, 1.0, grid=180, eig_grid=40)
        assert fine >= coarse - 1e-12

    @given(A=arrays(float, (2, 2), elements=entries), lam=st.floats(0.0, 1.0))
    @settings(deadline=None, max_examples=25)
    def test_agrees_with_solver_2x2(self, A, lam):
        S = _symmetric(A)
        solution = inner_max(S, lam, 1.0, max_iters=2000)
        brute = brute_inner_max(S, lam, 1.0)
        assert brute <= solution.dual_bound + 1e-9
        assert brute - solution.value <= solution.gap + 1e-9
        assert solution.value - brute <= grid_resolution(S, lam, 1.0) + 1e-9

    def test_agrees_with_solver_3x3(self):
        rng = np.random.default_rng(0)
        for _ in range(3):
            S = _symmetric(rng.standard_normal((3, 3)))
            solution = inner_max(S, 0.2, 1.0, max_iters=2000)
            brute = brute_inner_max(S, 0.2, 1.0)
            assert brute <= solution.dual_bound + 1e-9
            assert solution.value - brute <= grid_resolution(S, 0.2, 1.0) + 1e-9


class TestBruteSimplexMin:
    def test_identical_rows_without_trimming(self):
        G = np.repeat(np.diag([3.0, 1.0])[None], 4, axis=0)
        value, w = brute_simplex_min(G, 0.0, 1.0, 0.0, grid=20)
        assert value == pytest.approx(3.0)
        np.testing.assert_allclose(w, np.full(4, 0.25))

    def test_dominant_row_dropped(self):
        rows = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 100.0]])
        G = np.einsum("ij,ik->ijk", rows, rows)
        value, w = brute_simplex_min(G, 0.0, 1.0, 1.0 / 3.0)
        assert value == pytest.approx(1.0)
        np.testing.assert_allclose(w, [0.5, 0.5, 0.0])

    def test_zero_data(self):
        value, _ = brute_simplex_min(np.zeros((3, 2, 2)), 0.1, 1.0, 0.2, grid=20, inner_grid=30, inner_eig_grid=10)
        assert value == 0.0

    def test_size_limits(self):
        with pytest.raises(ValidationError):
            brute_simplex_min(np.zeros((5, 2, 2)), 0.0, 1.0, 0.1)
        with pytest.raises(ValidationError):
            brute_simplex_min(np.zeros((3, 4, 4)), 0.0, 1.0, 0.1)


class TestFiniteDiff:
    def test_scalar(self):
        assert finite_diff(lambda x: x ** 3, 2.0) == pytest.approx(12.0, rel=1e-6)

    def test_vector(self):
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(finite_diff(lambda v: float(v @ v), x), 2.0 * x, rtol=1e-6)

    def test_rejects_bad_step(self):
        with pytest.raises(ValidationError):
            finite_diff(lambda x: x, 1.0, h=0.0)


class TestQuadraticBranch:
    def test_least_squares(self):
        assert quadratic_branch_1d([1.0, 2.0], [1.0, 1.0], [1.0, 1.0], 0.0) == pytest.approx(1.5)

    def test_soft_threshold(self):
        assert quadratic_branch_1d([1.0, 2.0], [1.0, 1.0], [1.0, 1.0], 2.0) == 0.0
        assert quadratic_branch_1d([-1.0, -2.0], [1.0, 1.0], [1.0, 1.0], 0.5) == pytest.approx(-1.0)

    def test_dropped_samples(self):
        assert quadratic_branch_1d([1.0, 100.0], [1.0, 1.0], [1.0, 0.0], 0.0) == pytest.approx(1.0)

    def test_degenerate(self):
        with pytest.raises(ValidationError):
            quadratic_branch_1d([1.0], [0.0], [1.0], 0.0)
