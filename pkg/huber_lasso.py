"""
WEIGHTED-PENALIZED-HUBER-REGRESSION.

    beta_hat = argmin_beta  sum_i lambda_o^2 H(n w'_i (y_i - X_i^T beta) / (lambda_o sqrt(n))) + lambda_s ||beta||_1

H is the Huber loss with unit threshold and h = H' its score. The smooth part
has gradient -(lambda_o / sqrt(n)) sum_i a_i h(a_i r_i / (lambda_o sqrt(n))) X_i
with a_i = n w'_i and r_i = y_i - X_i^T beta, and curvature bounded by the
top eigenvalue of (1/n) sum_i a_i^2 X_i X_i^T. The solver is accelerated
proximal gradient with backtracking and a restart whenever the objective
would increase. After a restart the plain proximal step from the current
iterate is accepted up to a 1e-12 relative slack, so the accepted objective
sequence never goes up by more than rounding.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from console import log_message
from model_core import SolverControls, ValidationError
from rounding import RoundedWeights


def huber_value(t):
    """H(t) = t^2/2 for |t| <= 1 and |t| - 1/2 otherwise; accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValidationError("Huber loss needs finite arguments")
    a = np.abs(t)
    out = np.where(a <= 1.0, 0.5 * t * t, a - 0.5)
    return float(out) if out.ndim == 0 else out


def huber_deriv(t):
    """h(t) = t for |t| <= 1 and sgn(t) otherwise; accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValidationError("Huber score needs finite arguments")
    out = np.clip(t, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def soft_threshold(x: np.ndarray, c: float) -> np.ndarray:
    tmp = np.abs(x) - c
    return np.sign(x) * np.where(tmp <= 0, 0.0, tmp)


@dataclass(frozen=True)
class HuberObjective:
    lambda_o: float
    lambda_s: float
    weights: RoundedWeights
    y: np.ndarray
    X_tilde: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(getattr(self.X_tilde, "X_tilde", self.X_tilde), dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X_tilde", X)
        if not (self.lambda_o > 0 and math.isfinite(self.lambda_o)):
            raise ValidationError(f"lambda_o must be positive and finite, got {self.lambda_o}")
        if not (self.lambda_s >= 0 and math.isfinite(self.lambda_s)):
            raise ValidationError(f"lambda_s must be nonnegative and finite, got {self.lambda_s}")
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValidationError(f"incompatible shapes y{y.shape} and X{X.shape}")
        if self.weights.n != y.shape[0]:
            raise ValidationError(f"weights have length {self.weights.n}, expected {y.shape[0]}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValidationError("y and X_tilde must be finite")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X_tilde.shape[1]

    @property
    def _scale(self) -> float:
        return self.lambda_o * math.sqrt(self.n)

    def arguments(self, beta: np.ndarray) -> np.ndarray:
        """Standardized residuals n w'_i (y_i - X_i^T beta) / (lambda_o sqrt(n))."""
        residuals = self.y - self.X_tilde @ beta
        return self.weights.multipliers * residuals / self._scale

    def smooth_value(self, beta: np.ndarray) -> float:
        return self.lambda_o ** 2 * float(np.sum(huber_value(self.arguments(beta))))

    def smooth_gradient(self, beta: np.ndarray) -> np.ndarray:
        scores = self.weights.multipliers * huber_deriv(self.arguments(beta))
        return -(self.lambda_o / math.sqrt(self.n)) * (self.X_tilde.T @ scores)

    def lipschitz_bound(self, max_iter: int = 500, tol: float = 1e-10, seed: int = 0) -> float:
        """Top eigenvalue of (1/n) sum_i a_i^2 X_i X_i^T by power iteration."""
        Xa = self.weights.multipliers[:, None] * self.X_tilde
        gram = Xa.T @ Xa / self.n
        return power_iteration(gram, max_iter=max_iter, tol=tol, seed=seed)[0]


def power_iteration(A: np.ndarray, max_iter: int = 500, tol: float = 1e-10, seed: int = 0):
    """
    Dominant eigenpair of a symmetric psd matrix.

    Uses the residual ||A x - lambda x|| as the stopping test.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if not np.any(A):
        return 0.0, np.eye(n)[0] if n else np.zeros(0)

    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    x = x / np.linalg.norm(x)

    lam = 0.0
    for _ in range(max_iter):
        y = A @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            # x is in the nullspace; re-initialize
            x = rng.normal(size=n)
            x = x / np.linalg.norm(x)
            continue
        lam = float(x @ y)
        x = y / y_norm
        if np.linalg.norm(A @ x - lam * x) < tol * max(1.0, abs(lam)):
            break
    return max(lam, float(x @ (A @ x))), x


def objective(beta, obj: HuberObjective) -> float:
    """Full objective: smooth Huber part plus lambda_s ||beta||_1."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (obj.d,) or not np.all(np.isfinite(beta)):
        raise ValidationError(f"beta must be a finite vector of length {obj.d}")
    return obj.smooth_value(beta) + obj.lambda_s * float(np.sum(np.abs(beta)))


def stationarity_residual(beta: np.ndarray, obj: HuberObjective, gradient: Optional[np.ndarray] = None) -> float:
    """Largest coordinatewise distance of -gradient from lambda_s times the subdifferential of ||.||_1."""
    g = obj.smooth_gradient(beta) if gradient is None else gradient
    active = beta != 0
    res = np.where(active, np.abs(g + obj.lambda_s * np.sign(beta)), np.maximum(np.abs(g) - obj.lambda_s, 0.0))
    return float(np.max(res)) if res.size else 0.0


@dataclass(frozen=True)
class HuberDiagnostics:
    iterations: int
    converged: bool
    stationarity: float
    objective: float
    lipschitz: float
    restarts: int
    objective_trace: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "stationarity": self.stationarity,
            "objective": self.objective,
            "lipschitz": self.lipschitz,
            "restarts": self.restarts,
        }


def solve(obj: HuberObjective, ctrl: Optional[SolverControls] = None) -> Tuple[np.ndarray, HuberDiagnostics]:
    """
    Minimise the weighted penalized Huber objective from beta = 0.

    Args:
        obj: HuberObjective
        ctrl: uses huber_max_iters and huber_tolerance (stationarity residual)

    Returns:
        (beta_hat, diagnostics); when the iteration cap is hit the best
        iterate is returned with diagnostics.converged = False
    """
    ctrl = ctrl or SolverControls()
    d = obj.d
    beta = np.zeros(d)
    F = objective(beta, obj)
    trace = [F]
    L = obj.lipschitz_bound(seed=ctrl.seed)

    grad = obj.smooth_gradient(beta)
    residual = stationarity_residual(beta, obj, grad)
    if L <= 0.0 or residual <= ctrl.huber_tolerance:
        # constant smooth part: beta = 0 minimises the penalty
        return beta, HuberDiagnostics(0, True, residual, F, L, 0, tuple(trace))

    z = beta.copy()
    t = 1.0
    restarts = 0
    iteration = 0
    converged = False
    for iteration in range(1, ctrl.huber_max_iters + 1):
        gz = obj.smooth_gradient(z)
        fz = obj.smooth_value(z)
        while True:
            candidate = soft_threshold(z - gz / L, obj.lambda_s / L)
            diff = candidate - z
            proxy = fz + float(gz @ diff) + 0.5 * L * float(diff @ diff)
            if obj.smooth_value(candidate) <= proxy + 1e-12 * max(1.0, abs(fz)):
                break
            L *= 2.0
        F_candidate = objective(candidate, obj)
        # a plain step from beta may look like an increase only through rounding in F
        plain = t == 1.0 and np.array_equal(z, beta)
        slack = 1e-12 * max(1.0, abs(F)) if plain else 0.0
        if F_candidate <= F + slack:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = candidate + ((t - 1.0) / t_next) * (candidate - beta)
            beta, F, t = candidate, F_candidate, t_next
        else:
            restarts += 1
            z, t = beta.copy(), 1.0
        trace.append(F)

        residual = stationarity_residual(beta, obj)
        if residual <= ctrl.huber_tolerance:
            converged = True
            break

    if not converged:
        log_message(
            f"HUBER: stopped after {iteration} iterations with stationarity residual "
            f"{residual:.3e} (tolerance {ctrl.huber_tolerance:.1e})"
        )
    return beta, HuberDiagnostics(
        iterations=iteration,
        converged=converged,
        stationarity=residual,
        objective=F,
        lipschitz=L,
        restarts=restarts,
        objective_trace=tuple(trace),
    )
