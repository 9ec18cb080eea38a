"""
COMPUTE-WEIGHT: down-weight samples whose pruned second moments are inflated.

The weight program is the saddle point

    min_{w in Delta}  max_{M in M_r}  sum_i w_i <X_i X_i^T, M> - lambda_* ||M||_1

over the truncated simplex Delta = {w >= 0, sum w = 1, w_i <= 1/(n(1-eps))}
and the spectrahedron M_r = {M psd, Tr(M) <= r^2}. ||M||_1 is the entrywise
l1 norm.

The inner maximisation is solved through its dual form

    max_M <S, M> - lambda ||M||_1 = min_{||U||_inf <= lambda} r^2 max(lambda_max(S - U), 0)

with a projected extragradient method on the bilinear function <S - U, M>.
Every primal iterate is a feasible M and every dual iterate a feasible U, so
each solve carries a certified gap. The outer minimisation is projected
subgradient descent on w; the subgradient at w is (<X_i X_i^T, M*(w)>)_i.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional

import numpy as np
from scipy.optimize import brentq

from console import log_message
from model_core import NumericalError, SolverControls, ValidationError

_TINY = 1e-300


@dataclass(frozen=True)
class TruncatedSimplexPoint:
    """A weight vector w with sum 1 and 0 <= w_i <= 1/(n(1-epsilon))."""

    w: np.ndarray
    epsilon: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        if w.ndim != 1 or w.shape[0] < 1:
            raise ValidationError("w must be a non-empty vector")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("w contains non-finite entries")
        if abs(float(np.sum(w)) - 1.0) > 1e-9:
            raise ValidationError(f"weights must sum to 1, got {float(np.sum(w))!r}")
        if float(np.min(w)) < 0.0:
            raise ValidationError("weights must be nonnegative")
        if float(np.max(w)) > self.cap + 1e-12:
            raise ValidationError(f"weights exceed the cap 1/(n(1-epsilon)) = {self.cap!r}")

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def cap(self) -> float:
        return 1.0 / (self.n * (1.0 - self.epsilon))


@dataclass(frozen=True)
class SpectrahedronPoint:
    """A psd matrix M with Tr(M) <= r_bound (r_bound is the trace budget r^2)."""

    M: np.ndarray
    r_bound: float

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        object.__setattr__(self, "M", M)
        if not self.r_bound > 0:
            raise ValidationError(f"trace budget must be positive, got {self.r_bound}")
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValidationError("M must be a square matrix")
        scale = 1e-9 * max(1.0, self.r_bound)
        if M.size and float(np.max(np.abs(M - M.T))) > scale:
            raise ValidationError("M must be symmetric")
        if M.size and float(np.linalg.eigvalsh(M)[0]) < -scale:
            raise ValidationError("M must be positive semidefinite")
        if float(np.trace(M)) > self.r_bound + scale:
            raise ValidationError(f"Tr(M) = {float(np.trace(M))!r} exceeds the budget {self.r_bound!r}")


@dataclass(frozen=True)
class InnerSolution:
    """Result of one inner maximisation with its duality certificate."""

    value: float
    point: SpectrahedronPoint
    dual: np.ndarray
    dual_bound: float
    converged: bool
    iterations: int
    # last iterates, used to warm-start the next solve
    last_M: np.ndarray
    last_U: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return self.point.M

    @property
    def gap(self) -> float:
        return self.dual_bound - self.value


@dataclass(frozen=True)
class WeightCertificate:
    """Dual matrix U with ||U||_inf <= lambda_* and the upper bound it certifies."""

    U: np.ndarray
    upper_bound: float


@dataclass(frozen=True)
class WeightSolution:
    w_hat: TruncatedSimplexPoint
    value: float
    success: bool
    tau_suc: float
    certificate: Optional[WeightCertificate]
    # global lower bound on the saddle optimum over all w
    lower_bound: float
    iterations: int
    converged: bool
    inner_converged: bool
    gap_tolerance: float

    def __post_init__(self):
        if self.success != (self.value <= self.tau_suc):
            raise ValidationError("success must equal (value <= tau_suc)")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "success": self.success,
            "tau_suc": self.tau_suc,
            "upper_bound": None if self.certificate is None else self.certificate.upper_bound,
            "lower_bound": self.lower_bound,
            "iterations": self.iterations,
            "converged": self.converged,
            "inner_converged": self.inner_converged,
            "gap_tolerance": self.gap_tolerance,
            "epsilon": self.w_hat.epsilon,
        }


def _symmetric(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} contains non-finite entries")
    if A.size and float(np.max(np.abs(A - A.T))) > 1e-9 * max(1.0, float(np.max(np.abs(A)))):
        raise ValidationError(f"{name} must be symmetric")
    return 0.5 * (A + A.T)


def _eigh(A: np.ndarray):
    try:
        return np.linalg.eigh(A)
    except np.linalg.LinAlgError as e:
        norm = float(np.linalg.norm(A))
        raise NumericalError(
            f"eigendecomposition failed ({e}); shape={A.shape}, frobenius norm={norm:.3e}, "
            f"finite={bool(np.all(np.isfinite(A)))}"
        )


def _top_eigenpair(A: np.ndarray):
    values, vectors = _eigh(A)
    return float(values[-1]), vectors[:, -1]


def _project_eigenvalues(values: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection of a vector onto {lam >= 0, sum(lam) <= budget}."""
    lam = np.maximum(values, 0.0)
    if lam.sum() <= budget:
        return lam
    # projection onto the simplex of radius budget (sort-based)
    u = np.sort(values)[::-1]
    cssv = np.cumsum(u) - budget
    ind = np.arange(1, u.shape[0] + 1)
    positive = np.nonzero(u - cssv / ind > 0)[0]
    rho = int(positive[-1]) if positive.size else 0
    theta = cssv[rho] / (rho + 1.0)
    return np.maximum(values - theta, 0.0)


def project_spectrahedron(A, r_bound: float) -> SpectrahedronPoint:
    """
    Frobenius projection onto {M psd, Tr(M) <= r_bound}.

    Args:
        A: symmetric d x d matrix
        r_bound: trace budget r^2

    Returns:
        SpectrahedronPoint nearest to A
    """
    if not r_bound > 0:
        raise ValidationError(f"trace budget must be positive, got {r_bound}")
    A = _symmetric(A, "A")
    return SpectrahedronPoint(M=_project_psd(A, r_bound), r_bound=r_bound)


def _project_psd(A: np.ndarray, r_bound: float) -> np.ndarray:
    values, vectors = _eigh(A)
    projected = _project_eigenvalues(values, r_bound)
    keep = projected > 0
    if not np.any(keep):
        return np.zeros_like(A)
    V = vectors[:, keep]
    M = (V * projected[keep]) @ V.T
    return 0.5 * (M + M.T)


def project_truncated_simplex(v, epsilon: float) -> TruncatedSimplexPoint:
    """
    Euclidean projection onto {w : sum w = 1, 0 <= w_i <= 1/(n(1-epsilon))}.

    The projection is clip(v - theta, 0, cap) for the unique theta making the
    weights sum to one; theta is bracketed and found with Brent's method, then
    refined exactly on the free coordinates.

    Args:
        v: length-n vector
        epsilon: truncation parameter in [0, 1); the theory uses [1/n, 1/2)

    Returns:
        TruncatedSimplexPoint
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValidationError("v must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError("v contains non-finite entries")
    if not 0.0 <= epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in [0, 1), got {epsilon}")
    n = v.shape[0]
    cap = 1.0 / (n * (1.0 - epsilon))

    if abs(float(v.sum()) - 1.0) <= 1e-12 and float(v.min()) >= 0.0 and float(v.max()) <= cap:
        return TruncatedSimplexPoint(w=v.copy(), epsilon=epsilon)
    # the cap leaves no room beyond the uniform vector (epsilon = 0 up to rounding)
    if n * cap <= 1.0 + 1e-12:
        return TruncatedSimplexPoint(w=np.full(n, 1.0 / n), epsilon=epsilon)

    def excess(theta: float) -> float:
        return float(np.clip(v - theta, 0.0, cap).sum()) - 1.0

    spacing = float(np.spacing(max(abs(float(v.min())), abs(float(v.max())), cap)))
    lo = float(v.min()) - cap - 4.0 * spacing
    hi = float(v.max()) + 4.0 * spacing
    try:
        theta = brentq(excess, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    except (ValueError, RuntimeError) as e:
        raise ValidationError(f"truncated simplex projection failed for n={n}, epsilon={epsilon}: {e}")
    shifted = v - theta
    free = (shifted > 0.0) & (shifted < cap)
    if np.any(free):
        n_capped = int(np.count_nonzero(shifted >= cap))
        theta = (float(v[free].sum()) + cap * n_capped - 1.0) / int(np.count_nonzero(free))
    w = np.clip(v - theta, 0.0, cap)
    return TruncatedSimplexPoint(w=w, epsilon=epsilon)


def _primal_value(S: np.ndarray, M: np.ndarray, lambda_star: float) -> float:
    return float(np.sum(S * M)) - lambda_star * float(np.sum(np.abs(M)))


def _dual_value(S: np.ndarray, U: np.ndarray, r_bound: float):
    top, vector = _top_eigenpair(S - U)
    return r_bound * max(top, 0.0), top, vector


def dual_certificate_bound(S, U, r_bound: float, lambda_star: float) -> float:
    """
    Upper bound r^2 * max(lambda_max(S - U), 0) on the inner maximum.

    Valid for every U with ||U||_inf <= lambda_star (weak duality).

    Raises:
        ValidationError: if U is not symmetric or violates the entrywise bound
    """
    S = _symmetric(S, "S")
    U = _symmetric(U, "U")
    if S.shape != U.shape:
        raise ValidationError("S and U must have the same shape")
    if not r_bound > 0:
        raise ValidationError(f"trace budget must be positive, got {r_bound}")
    if U.size and float(np.max(np.abs(U))) > lambda_star * (1 + 1e-12) + 1e-15:
        raise ValidationError(f"||U||_inf exceeds lambda_star = {lambda_star}")
    bound, _, _ = _dual_value(S, U, r_bound)
    return bound


def inner_max(
    S,
    lambda_star: float,
    r_bound: float,
    ctrl: Optional[SolverControls] = None,
    M0: Optional[np.ndarray] = None,
    U0: Optional[np.ndarray] = None,
    max_iters: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> InnerSolution:
    """
    Compute sup over M in M_r of <S, M> - lambda_star ||M||_1.

    Args:
        S: symmetric d x d matrix
        lambda_star: entrywise l1 penalty (>= 0)
        r_bound: trace budget r^2
        ctrl: solver controls (max_inner_iters, gap_tolerance)
        M0, U0: optional warm start
        max_iters, tolerance: override the controls

    Returns:
        InnerSolution whose value is attained by a feasible M and is within
        dual_bound - value of the optimum; converged says whether that gap
        is below the tolerance. value >= 0 always (M = 0 is feasible).
    """
    S = _symmetric(S, "S")
    if lambda_star < 0:
        raise ValidationError(f"lambda_star must be nonnegative, got {lambda_star}")
    if not r_bound > 0:
        raise ValidationError(f"trace budget must be positive, got {r_bound}")
    ctrl = ctrl or SolverControls()
    iters = max_iters if max_iters is not None else ctrl.max_inner_iters
    tol = tolerance if tolerance is not None else ctrl.resolved_gap_tolerance()
    d = S.shape[0]

    M = np.zeros((d, d)) if M0 is None else _project_psd(_symmetric(M0, "M0"), r_bound)
    U = np.zeros((d, d)) if U0 is None else np.clip(_symmetric(U0, "U0"), -lambda_star, lambda_star)

    best_M = np.zeros((d, d))
    best_primal = 0.0
    value = _primal_value(S, M, lambda_star)
    if value > best_primal:
        best_primal, best_M = value, M
    best_U = U
    best_dual, _, _ = _dual_value(S, U, r_bound)

    norm_S = float(np.linalg.norm(S))
    # a penalty below the resolution of S would blow up the primal step
    if lambda_star * d > 1e-12 * norm_S:
        spread = lambda_star * d
        eta_M = 0.9 * math.sqrt(r_bound / spread)
        eta_U = 0.9 * math.sqrt(spread / r_bound)
    else:
        eta_M = r_bound / max(norm_S, _TINY)
        eta_U = 0.0

    sum_M = np.zeros((d, d))
    sum_U = np.zeros((d, d))
    iteration = 0
    while best_dual - best_primal > tol and iteration < iters:
        iteration += 1
        M_half = _project_psd(M + eta_M * (S - U), r_bound)
        U_half = np.clip(U + eta_U * M, -lambda_star, lambda_star)
        M = _project_psd(M + eta_M * (S - U_half), r_bound)
        U = np.clip(U + eta_U * M_half, -lambda_star, lambda_star)
        sum_M += M_half
        sum_U += U_half

        avg_M = sum_M / iteration
        avg_U = sum_U / iteration
        for candidate in (M, avg_M):
            value = _primal_value(S, candidate, lambda_star)
            if value > best_primal:
                best_primal, best_M = value, candidate
        for candidate in (U, avg_U):
            bound, top, vector = _dual_value(S, candidate, r_bound)
            if bound < best_dual:
                best_dual, best_U = bound, candidate
            # rank-one best response to the dual iterate
            if top > 0:
                rank_one = r_bound * np.outer(vector, vector)
                value = _primal_value(S, rank_one, lambda_star)
                if value > best_primal:
                    best_primal, best_M = value, rank_one

    best_dual = max(best_dual, best_primal)
    return InnerSolution(
        value=best_primal,
        point=SpectrahedronPoint(M=best_M, r_bound=r_bound),
        dual=best_U,
        dual_bound=best_dual,
        converged=best_dual - best_primal <= tol,
        iterations=iteration,
        last_M=M,
        last_U=U,
    )


def sample_contractions(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """<X_i X_i^T, M> = X_i^T M X_i for every row."""
    return np.sum((X @ M) * X, axis=1)


def weighted_gram(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_i w_i X_i X_i^T."""
    S = X.T @ (w[:, None] * X)
    return 0.5 * (S + S.T)


def _greedy_min(a: np.ndarray, cap: float) -> float:
    """min over the truncated simplex of sum_i w_i a_i (fill the smallest a_i up to the cap)."""
    order = np.argsort(a, kind="stable")
    full = int(math.floor(1.0 / cap + 1e-12))
    full = min(full, a.shape[0])
    total = cap * float(np.sum(a[order[:full]]))
    remainder = 1.0 - cap * full
    if remainder > 0 and full < a.shape[0]:
        total += remainder * float(a[order[full]])
    return total


def oracle_weights(n: int, outlier_set: Iterable[int], epsilon: float, normalize: bool = False) -> np.ndarray:
    """
    Weights 1/(n(1-epsilon)) on the inliers and 0 on the outliers.

    They sum to (n - o)/(n(1 - epsilon)), which is >= 1 when o <= epsilon * n
    and equals 1 exactly when o = epsilon * n. With normalize=True the vector
    is rescaled to sum 1; it is then entrywise below the raw oracle weights
    and lies in the truncated simplex, so its saddle value is at most the raw one.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in [0, 1), got {epsilon}")
    w = np.full(n, 1.0 / (n * (1.0 - epsilon)))
    outliers = list(outlier_set)
    if outliers:
        w[outliers] = 0.0
    if normalize:
        total = float(w.sum())
        if total <= 0.0:
            raise ValidationError("every sample is an outlier; oracle weights vanish")
        w = w / total
    return w


def saddle_value(X, w, lambda_star: float, r_bound: float, ctrl: Optional[SolverControls] = None,
                 tolerance: Optional[float] = None) -> InnerSolution:
    """Inner maximum of the weight program at a fixed weight vector w."""
    X = np.asarray(getattr(X, "X_tilde", X), dtype=float)
    return inner_max(weighted_gram(X, np.asarray(w, dtype=float)), lambda_star, r_bound, ctrl,
                     tolerance=tolerance)


def compute_weight(
    X_tilde,
    lambda_star: float,
    tau_suc: float,
    epsilon: float,
    r_bound: float,
    ctrl: Optional[SolverControls] = None,
) -> WeightSolution:
    """
    Solve the weight program and test the value against tau_suc.

    Args:
        X_tilde: PrunedMatrix or n x d array of pruned covariates
        lambda_star: l1 penalty of the inner problem (> 0 recommended, 0 allowed)
        tau_suc: success threshold
        epsilon: truncation parameter
        r_bound: trace budget r^2
        ctrl: solver controls

    Returns:
        WeightSolution; success = False corresponds to the "fail" outcome of
        the algorithm but the best weights found are still returned
    """
    X = np.asarray(getattr(X_tilde, "X_tilde", X_tilde), dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValidationError("X_tilde must be a non-empty matrix")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X_tilde contains non-finite entries")
    if lambda_star < 0:
        raise ValidationError(f"lambda_star must be nonnegative, got {lambda_star}")
    if tau_suc < 0:
        raise ValidationError(f"tau_suc must be nonnegative, got {tau_suc}")
    if not 0.0 <= epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in [0, 1), got {epsilon}")
    if not r_bound > 0:
        raise ValidationError(f"trace budget must be positive, got {r_bound}")
    ctrl = ctrl or SolverControls()
    tol = ctrl.resolved_gap_tolerance(tau_suc)
    n, d = X.shape
    cap = 1.0 / (n * (1.0 - epsilon))
    radius = math.sqrt(n) * cap

    w = np.full(n, 1.0 / n)
    w_sum = np.zeros(n)
    M_sum = np.zeros((d, d))
    best_w, best_upper = w, math.inf
    lower = -math.inf
    warm_M: Optional[np.ndarray] = None
    warm_U: Optional[np.ndarray] = None
    converged = False
    iteration = 0

    for iteration in range(1, ctrl.max_outer_iters + 1):
        inner = inner_max(
            weighted_gram(X, w), lambda_star, r_bound, ctrl,
            M0=warm_M, U0=warm_U,
            max_iters=ctrl.max_inner_iters if warm_M is None else ctrl.warm_inner_iters,
            tolerance=0.25 * tol,
        )
        warm_M, warm_U = inner.last_M, inner.last_U
        if inner.dual_bound < best_upper:
            best_upper, best_w = inner.dual_bound, w
        w_sum += w

        contractions = sample_contractions(X, inner.M)
        M_sum += inner.M
        avg_M = M_sum / iteration
        for M, a in ((inner.M, contractions), (avg_M, sample_contractions(X, avg_M))):
            lower = max(lower, _greedy_min(a, cap) - lambda_star * float(np.sum(np.abs(M))))
        if best_upper - lower <= tol:
            converged = True
            break

        g = contractions - contractions.mean()
        g_norm = float(np.linalg.norm(g))
        if g_norm <= _TINY:
            break
        w = project_truncated_simplex(w - radius / (g_norm * math.sqrt(iteration)) * g, epsilon).w

    candidates = [best_w]
    if not converged and iteration > 1:
        candidates.append(project_truncated_simplex(w_sum / iteration, epsilon).w)
    final_w, final = None, None
    for candidate in candidates:
        solved = inner_max(weighted_gram(X, candidate), lambda_star, r_bound, ctrl,
                           M0=warm_M, U0=warm_U, tolerance=tol)
        if final is None or solved.dual_bound < final.dual_bound:
            final_w, final = candidate, solved

    lower = min(lower, final.value)
    converged = converged or final.dual_bound - lower <= tol
    if not final.converged:
        log_message(
            f"COMPUTE-WEIGHT: inner solve stopped with gap {final.gap:.3e} (tolerance {tol:.3e})"
        )
    success = final.value <= tau_suc
    log_message(
        f"COMPUTE-WEIGHT: value={final.value:.6g} tau_suc={tau_suc:.6g} "
        f"{'success' if success else 'fail'} after {iteration} outer iterations"
    )
    return WeightSolution(
        w_hat=TruncatedSimplexPoint(w=final_w, epsilon=epsilon),
        value=final.value,
        success=success,
        tau_suc=tau_suc,
        certificate=WeightCertificate(U=final.dual, upper_bound=final.dual_bound),
        lower_bound=lower,
        iterations=iteration,
        converged=converged,
        inner_converged=final.converged,
        gap_tolerance=tol,
    )
