"""
Brute-force oracles for tiny problems.

Grid optima are attained by feasible points, so for maximisations they are
certified lower bounds; comparisons against the solvers allow for the grid
resolution plus the solver's own duality gap.
"""

import itertools
import math
from typing import Callable, Optional, Tuple

import numpy as np

from model_core import ValidationError


def _rotation_2d(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    # (k, 2, 2), columns are the eigenvectors
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


def _rotation_zyz(alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    def rz(t):
        c, s = np.cos(t), np.sin(t)
        z, o = np.zeros_like(t), np.ones_like(t)
        return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)

    def ry(t):
        c, s = np.cos(t), np.sin(t)
        z, o = np.zeros_like(t), np.ones_like(t)
        return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)

    return rz(alpha) @ ry(beta) @ rz(gamma)


def _simplex_grid(parts: int, steps: int) -> np.ndarray:
    """All vectors k/steps with nonnegative integer k and sum(k) <= steps."""
    points = [c for c in itertools.product(range(steps + 1), repeat=parts) if sum(c) <= steps]
    return np.array(points, dtype=float) / steps


def _default_grids(d: int, grid: Optional[int], eig_grid: Optional[int]) -> Tuple[int, int]:
    if d == 2:
        return grid or 360, eig_grid or 40
    return grid or 24, eig_grid or 12


def brute_inner_max(S, lambda_star: float, r_bound: float, grid: Optional[int] = None,
                    eig_grid: Optional[int] = None) -> float:
    """
    Grid maximum of <S, M> - lambda_star ||M||_1 over M = Q diag(l) Q^T.

    l runs over the simplex grid {k/eig_grid} scaled by r_bound and Q over a
    rotation grid: one angle in [0, pi) for d = 2, ZYZ Euler angles for d = 3.
    Doubling grid or eig_grid refines the grid, so the value never decreases.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] not in (2, 3):
        raise ValidationError("brute_inner_max supports only 2x2 and 3x3 matrices")
    if not np.allclose(S, S.T):
        raise ValidationError("S must be symmetric")
    d = S.shape[0]
    grid, eig_grid = _default_grids(d, grid, eig_grid)
    eigenvalues = r_bound * _simplex_grid(d, eig_grid)  # (m, d)

    if d == 2:
        rotations = _rotation_2d(np.arange(grid) * math.pi / grid)
    else:
        full = np.arange(grid) * 2.0 * math.pi / grid
        tilt = np.arange(grid + 1) * math.pi / grid
        a, b, c = np.meshgrid(full, tilt, full, indexing="ij")
        rotations = _rotation_zyz(a.ravel(), b.ravel(), c.ravel())

    best = 0.0
    for chunk in np.array_split(rotations, max(1, len(rotations) // 512)):
        # rank-one pieces q_k q_k^T for every rotation: (r, d, d, d)
        outer = np.einsum("rik,rjk->rkij", chunk, chunk)
        # M for every (rotation, eigenvalue vector): (r, m, d, d)
        M = np.einsum("mk,rkij->rmij", eigenvalues, outer)
        values = np.einsum("ij,rmij->rm", S, M) - lambda_star * np.abs(M).sum(axis=(2, 3))
        best = max(best, float(values.max()))
    return best


def grid_resolution(S, lambda_star: float, r_bound: float, grid: Optional[int] = None,
                    eig_grid: Optional[int] = None) -> float:
    """Bound on how far the grid optimum of brute_inner_max can sit below the true maximum."""
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    grid, eig_grid = _default_grids(d, grid, eig_grid)
    n_angles, step = (1, math.pi / grid) if d == 2 else (3, 2.0 * math.pi / grid)
    lipschitz = float(np.linalg.norm(S)) + lambda_star * d
    return lipschitz * r_bound * (math.sqrt(d) / eig_grid + 2.0 * n_angles * step)


def brute_simplex_min(gram_rows, lambda_star: float, r_bound: float, epsilon: float,
                      grid: int = 100, inner_grid: Optional[int] = None,
                      inner_eig_grid: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """
    Grid minimum over the truncated simplex of the inner maximum at sum_i w_i G_i.

    Args:
        gram_rows: (n, d, d) array of X_i X_i^T, n <= 4 and d <= 3
        lambda_star, r_bound, epsilon: weight program parameters
        grid: the simplex grid has step 1/grid

    Returns:
        (value, w) at the best grid point; with lambda_star = 0 the inner
        maximum is evaluated exactly as r_bound * max(lambda_max, 0)
    """
    G = np.asarray(gram_rows, dtype=float)
    if G.ndim != 3 or G.shape[1] != G.shape[2]:
        raise ValidationError("gram_rows must have shape (n, d, d)")
    n, d = G.shape[0], G.shape[1]
    if n > 4:
        raise ValidationError(f"brute_simplex_min supports n <= 4, got {n}")
    if d > 3:
        raise ValidationError(f"brute_simplex_min supports d <= 3, got {d}")
    cap = 1.0 / (n * (1.0 - epsilon))

    best_value, best_w = math.inf, None
    for counts in itertools.product(range(grid + 1), repeat=n - 1):
        last = grid - sum(counts)
        if last < 0:
            continue
        w = np.array(list(counts) + [last], dtype=float) / grid
        if float(w.max()) > cap + 1e-12:
            continue
        S = np.einsum("i,ijk->jk", w, G)
        if lambda_star == 0.0 or d == 1:
            value = r_bound * max(float(np.linalg.eigvalsh(S)[-1]), 0.0)
            if d == 1 and lambda_star:
                value = max(float(S[0, 0]) - lambda_star, 0.0) * r_bound
        else:
            value = brute_inner_max(S, lambda_star, r_bound, inner_grid, inner_eig_grid)
        if value < best_value:
            best_value, best_w = value, w
    if best_w is None:
        raise ValidationError("no grid point lies in the truncated simplex; refine the grid")
    return best_value, best_w


def finite_diff(f: Callable, x, h: float = 1e-6):
    """Central differences; returns a float for scalar x and an array otherwise."""
    if not h > 0:
        raise ValidationError(f"step must be positive, got {h}")
    x_arr = np.asarray(x, dtype=float)
    if x_arr.ndim == 0:
        xf = float(x_arr)
        return (f(xf + h) - f(xf - h)) / (2.0 * h)
    grad = np.zeros_like(x_arr)
    for j in range(x_arr.size):
        e = np.zeros_like(x_arr)
        e.flat[j] = h
        grad.flat[j] = (f(x_arr + e) - f(x_arr - e)) / (2.0 * h)
    return grad


def quadratic_branch_1d(y, x, multipliers, lambda_s: float) -> float:
    """
    Minimiser of the one-dimensional problem when every Huber argument is in the quadratic branch.

    The objective is then sum_i a_i (y_i - x_i b)^2 / (2n) + lambda_s |b| with
    a_i in {0, 1}, so b = soft(sum a x y / n, lambda_s) / (sum a x^2 / n).
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    a = np.asarray(multipliers, dtype=float)
    n = y.shape[0]
    curvature = float(np.sum(a * x * x)) / n
    if curvature <= 0:
        raise ValidationError("degenerate one-dimensional design")
    correlation = float(np.sum(a * x * y)) / n
    return math.copysign(max(abs(correlation) - lambda_s, 0.0), correlation) / curvature
