"""
Statistical model types shared by every stage of the estimator.

The observed data follow the contaminated sparse linear model

    y_i = X_i^T beta* + xi_i + sqrt(n) theta_i,   X_i = x_i + rho_i,

where the adversary chooses rho_i and theta_i on an index set O of size o and
leaves the inliers I untouched. This module holds:
- RegressionInstance: observed (y, X) plus optional ground truth
- MomentProfile: the moment constants the tuning rules are written in
- Rates: the rate quantities r_o, r_d, r_delta and their combinations
- SolverControls: iteration budgets and tolerances of the iterative solvers
- the exception hierarchy used across the project

Indices are 0-based everywhere in code.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from console import log_warning


class RobustRegressionError(Exception):
    """Base class for all errors raised by this project."""


class ValidationError(RobustRegressionError, ValueError):
    """An input violates a precondition or a type invariant."""


class SingularDesignError(ValidationError):
    """The design has a singular Gram matrix (lambda_Sigma = 0)."""


class NumericalError(RobustRegressionError, ArithmeticError):
    """A linear-algebra kernel failed."""


class ParseError(RobustRegressionError):
    """A data or configuration file could not be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


def _as_index_tuple(values, name: str) -> Tuple[int, ...]:
    try:
        return tuple(sorted(int(v) for v in values))
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name} must be a collection of integer indices: {e}")


@dataclass(frozen=True)
class GroundTruth:
    """Truth attached to synthetic instances."""

    beta_star: np.ndarray
    support: Tuple[int, ...]
    outlier_set: Tuple[int, ...]
    inlier_set: Tuple[int, ...]
    # theta_i = corruption_i / sqrt(n), kept for audit only
    theta: Optional[np.ndarray] = None

    def __post_init__(self):
        beta = np.asarray(self.beta_star, dtype=float)
        object.__setattr__(self, "beta_star", beta)
        object.__setattr__(self, "support", _as_index_tuple(self.support, "support"))
        object.__setattr__(self, "outlier_set", _as_index_tuple(self.outlier_set, "outlier_set"))
        object.__setattr__(self, "inlier_set", _as_index_tuple(self.inlier_set, "inlier_set"))
        if self.theta is not None:
            object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if beta.ndim != 1:
            raise ValidationError("beta_star must be a vector")
        off_support = np.ones(beta.shape[0], dtype=bool)
        if self.support and (min(self.support) < 0 or max(self.support) >= beta.shape[0]):
            raise ValidationError("support indices out of range")
        off_support[list(self.support)] = False
        if np.any(beta[off_support] != 0.0):
            raise ValidationError("beta_star must be zero off its support")

    @property
    def s(self) -> int:
        return len(self.support)

    @property
    def o(self) -> int:
        return len(self.outlier_set)


@dataclass(frozen=True)
class RegressionInstance:
    """Observed responses y (length n) and covariates X (n x d)."""

    y: np.ndarray
    X: np.ndarray
    truth: Optional[GroundTruth] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if y.ndim != 1:
            raise ValidationError("y must be a vector")
        if X.ndim != 2:
            raise ValidationError("X must be a matrix")
        if X.shape[0] != y.shape[0]:
            raise ValidationError(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
        if X.shape[1] < 3:
            raise ValidationError(f"dimension d must be at least 3, got {X.shape[1]}")
        if self.truth is not None:
            truth = self.truth
            n = y.shape[0]
            if truth.beta_star.shape[0] != X.shape[1]:
                raise ValidationError("beta_star length must equal d")
            if truth.s > X.shape[1]:
                raise ValidationError("support larger than d")
            outliers = set(truth.outlier_set)
            inliers = set(truth.inlier_set)
            if outliers & inliers:
                raise ValidationError("outlier_set and inlier_set overlap")
            if outliers | inliers != set(range(n)):
                raise ValidationError("outlier_set and inlier_set must partition the sample indices")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def permuted(self, order: np.ndarray) -> "RegressionInstance":
        """Return a copy with samples reordered as y[order], X[order]."""
        order = np.asarray(order)
        truth = self.truth
        if truth is not None:
            position = np.empty_like(order)
            position[order] = np.arange(order.shape[0])
            truth = GroundTruth(
                beta_star=truth.beta_star,
                support=truth.support,
                outlier_set=[int(position[i]) for i in truth.outlier_set],
                inlier_set=[int(position[i]) for i in truth.inlier_set],
                theta=None if truth.theta is None else truth.theta[order],
            )
        return RegressionInstance(y=self.y[order], X=self.X[order], truth=truth)


@dataclass(frozen=True)
class MomentProfile:
    """
    Moment constants of the covariate and noise laws.

    sigma_x2, sigma_x4: max over coordinates of (E x_j^2)^(1/2) and (E x_j^4)^(1/4)
    sigma_x8: bound with E(x_j1 x_j2 x_j3 x_j4)^2 <= sigma_x8^8
    kurtosis_K: E(v^T x)^4 <= K^4 (E(v^T x)^2)^2 for all v
    sigma_noise: bound on the absolute moment of the noise
    sigma_op: ||Sigma^(1/2)||_op
    lambda_Sigma: minimum singular value of Sigma^(1/2)

    Estimated profiles (estimated=True) may carry zeros; lambda_Sigma = 0 marks
    a singular design, which tuning refuses.
    """

    sigma_x2: float
    sigma_x4: float
    sigma_x8: float
    kurtosis_K: float
    sigma_noise: float
    sigma_op: float
    lambda_Sigma: float
    estimated: bool = False

    def __post_init__(self):
        values = {
            "sigma_x2": self.sigma_x2,
            "sigma_x4": self.sigma_x4,
            "sigma_x8": self.sigma_x8,
            "kurtosis_K": self.kurtosis_K,
            "sigma_noise": self.sigma_noise,
            "sigma_op": self.sigma_op,
            "lambda_Sigma": self.lambda_Sigma,
        }
        for name, value in values.items():
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value}")
            if self.estimated:
                if value < 0:
                    raise ValidationError(f"{name} must be nonnegative, got {value}")
            elif value <= 0:
                raise ValidationError(f"{name} must be strictly positive, got {value}")
        if self.kurtosis_K < 1:
            raise ValidationError(f"kurtosis_K must be at least 1, got {self.kurtosis_K}")
        if self.lambda_Sigma > self.sigma_op * (1 + 1e-12):
            raise ValidationError("lambda_Sigma cannot exceed sigma_op")

    @property
    def singular(self) -> bool:
        return self.lambda_Sigma == 0.0

    @property
    def sigma_op_squared(self) -> float:
        """||Sigma||_op."""
        return self.sigma_op ** 2

    @property
    def lambda_sigma_at_most_one(self) -> bool:
        """The simplification 1 >= lambda_Sigma assumed by the theory."""
        return self.lambda_Sigma <= 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sigma_x2": self.sigma_x2,
            "sigma_x4": self.sigma_x4,
            "sigma_x8": self.sigma_x8,
            "kurtosis_K": self.kurtosis_K,
            "sigma_noise": self.sigma_noise,
            "sigma_op": self.sigma_op,
            "lambda_Sigma": self.lambda_Sigma,
            "estimated": self.estimated,
        }


@dataclass(frozen=True)
class Rates:
    r_o: float
    r_d: float
    r_delta: float
    r_xd: float
    r_xdelta: float
    r_ddelta: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "r_o": self.r_o,
            "r_d": self.r_d,
            "r_delta": self.r_delta,
            "r_xd": self.r_xd,
            "r_xdelta": self.r_xdelta,
            "r_ddelta": self.r_ddelta,
        }


@dataclass(frozen=True)
class SolverControls:
    """Iteration budgets and tolerances; gap_tolerance=None means 1e-4 * max(1, tau_suc)."""

    max_outer_iters: int = 500
    max_inner_iters: int = 300
    warm_inner_iters: int = 30
    gap_tolerance: Optional[float] = None
    huber_max_iters: int = 5000
    huber_tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("max_outer_iters", "max_inner_iters", "warm_inner_iters", "huber_max_iters"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.gap_tolerance is not None and self.gap_tolerance <= 0:
            raise ValidationError("gap_tolerance must be positive")
        if self.huber_tolerance <= 0:
            raise ValidationError("huber_tolerance must be positive")

    def resolved_gap_tolerance(self, tau_suc: Optional[float] = None) -> float:
        if self.gap_tolerance is not None:
            return self.gap_tolerance
        if tau_suc is None:
            return 1e-4
        return 1e-4 * max(1.0, tau_suc)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_outer_iters": self.max_outer_iters,
            "max_inner_iters": self.max_inner_iters,
            "warm_inner_iters": self.warm_inner_iters,
            "gap_tolerance": self.gap_tolerance,
            "huber_max_iters": self.huber_max_iters,
            "huber_tolerance": self.huber_tolerance,
            "seed": self.seed,
        }


def compute_rates(n: int, d: int, o: int, delta: float, tau_x: float, sigma_x2: float) -> Rates:
    """
    Evaluate the rate quantities (natural logarithms).

    Args:
        n: sample count (>= 1)
        d: dimension (>= 3)
        o: number of outliers, 0 <= o <= n
        delta: failure probability in (0, 1)
        tau_x: pruning threshold (> 0)
        sigma_x2: second-moment constant

    Returns:
        Rates with r_o = sqrt(o/n), r_d = sqrt(log d / n), r_delta = sqrt(log(1/delta) / n),
        r_xd = (sigma_x2 + 1) r_d + tau_x r_d^2, r_xdelta likewise, r_ddelta = r_xd + r_xdelta.

    Raises:
        ValidationError: on any violated precondition
    """
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    if d < 3:
        raise ValidationError(f"d must be at least 3, got {d}")
    if not 0 <= o <= n:
        raise ValidationError(f"o must lie in [0, n], got {o}")
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    if not tau_x > 0:
        raise ValidationError(f"tau_x must be positive, got {tau_x}")
    if sigma_x2 < 0:
        raise ValidationError(f"sigma_x2 must be nonnegative, got {sigma_x2}")

    r_o = math.sqrt(o / n)
    r_d = math.sqrt(math.log(d) / n)
    r_delta = math.sqrt(math.log(1.0 / delta) / n)
    r_xd = (sigma_x2 + 1.0) * r_d + tau_x * r_d ** 2
    r_xdelta = (sigma_x2 + 1.0) * r_delta + tau_x * r_delta ** 2
    return Rates(
        r_o=r_o,
        r_d=r_d,
        r_delta=r_delta,
        r_xd=r_xd,
        r_xdelta=r_xdelta,
        r_ddelta=r_xd + r_xdelta,
    )


def estimate_moment_profile(
    X_pruned,
    residuals: Optional[np.ndarray] = None,
    seed: int = 0,
    n_directions: int = 100,
) -> MomentProfile:
    """
    Plug-in estimates of the moment constants from (pruned) covariates.

    sigma_x8 is estimated by (max_j mean x_j^8)^(1/8), which dominates every
    cross moment E(x_j1 x_j2 x_j3 x_j4)^2 by Hoelder's inequality. K is the
    maximum empirical kurtosis ratio over the coordinate directions and
    n_directions random unit vectors. sigma_noise is mean |residual| when
    residuals are supplied and 1 otherwise.

    Args:
        X_pruned: PrunedMatrix or n x d array
        residuals: optional residual vector for the noise constant
        seed: seed of the random directions
        n_directions: number of random directions for K

    Returns:
        MomentProfile with estimated=True; lambda_Sigma = 0 flags a singular Gram matrix
    """
    X = np.asarray(getattr(X_pruned, "X_tilde", X_pruned), dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be a matrix")
    n, d = X.shape
    if n < 2:
        raise ValidationError(f"need at least 2 samples, got {n}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains non-finite entries")

    sq = X ** 2
    sigma_x2 = math.sqrt(float(np.max(np.mean(sq, axis=0))))
    sigma_x4 = float(np.max(np.mean(sq ** 2, axis=0))) ** 0.25
    sigma_x8 = float(np.max(np.mean(sq ** 4, axis=0))) ** 0.125

    gram = X.T @ X / n
    try:
        eigenvalues = np.linalg.eigvalsh(gram)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"eigensolver failed on the empirical Gram matrix: {e}")
    top = max(float(eigenvalues[-1]), 0.0)
    bottom = float(eigenvalues[0])
    sigma_op = math.sqrt(top)
    if top == 0.0 or bottom <= 1e-12 * top:
        log_warning(
            f"empirical Gram matrix is singular (eigenvalue range [{bottom:.3e}, {top:.3e}]); "
            "lambda_Sigma reported as 0"
        )
        lambda_sigma = 0.0
    else:
        lambda_sigma = min(math.sqrt(bottom), sigma_op)

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((d, n_directions))
    directions /= np.linalg.norm(directions, axis=0, keepdims=True)
    directions = np.hstack([np.eye(d), directions])
    projections = X @ directions
    m2 = np.mean(projections ** 2, axis=0)
    m4 = np.mean(projections ** 4, axis=0)
    valid = m2 > 1e-300
    kurtosis = 1.0
    if np.any(valid):
        kurtosis = max(1.0, float(np.max(m4[valid] / m2[valid] ** 2)) ** 0.25)

    sigma_noise = 1.0
    if residuals is not None:
        residuals = np.asarray(residuals, dtype=float)
        sigma_noise = float(np.mean(np.abs(residuals)))

    return MomentProfile(
        sigma_x2=sigma_x2,
        sigma_x4=sigma_x4,
        sigma_x8=sigma_x8,
        kurtosis_K=kurtosis,
        sigma_noise=sigma_noise,
        sigma_op=sigma_op,
        lambda_Sigma=lambda_sigma,
        estimated=True,
    )
