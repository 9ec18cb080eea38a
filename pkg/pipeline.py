"""
ROBUST-SPARSE-ESTIMATION: PRUNING -> COMPUTE-WEIGHT -> ROUNDING -> WEIGHTED-PENALIZED-HUBER-REGRESSION.

Samples are processed in a canonical order (lexicographic in (y_i, X_i)) and
the per-sample outputs are mapped back to the caller's order, so a
permutation of the input permutes the weights and leaves beta_hat unchanged.

beta_hat is reported as coefficients on the unpruned covariate scale; the
pruning only enters the estimation.

Estimators:
- robust: all four stages
- lasso: no pruning, uniform weights, lambda_o large enough that every
  residual stays in the quadratic branch of the Huber loss
- huber_lasso_unweighted: no pruning, uniform weights, configured lambda_o
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from console import log_message, log_warning
from huber_lasso import HuberDiagnostics, HuberObjective, solve
from model_core import NumericalError, RegressionInstance, SolverControls, ValidationError
from pruning import prune_matrix
from rounding import RoundedWeights, round_weights, uniform_rounded
from tuning import EstimatorConfig
from weight_solver import TruncatedSimplexPoint, WeightSolution, compute_weight

ESTIMATORS = ("robust", "lasso", "huber_lasso_unweighted")
LASSO_SCALE = 1e8


@dataclass(frozen=True)
class EstimationResult:
    beta_hat: np.ndarray
    estimator: str
    config: EstimatorConfig
    rounded: RoundedWeights
    weight_solution: Optional[WeightSolution]
    huber: HuberDiagnostics
    lambda_o_used: float
    l2_error: Optional[float] = None
    failed: bool = False
    flags: Dict[str, bool] = field(default_factory=dict)
    stage_timings: Dict[str, float] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return not self.failed

    def to_dict(self, include_timings: bool = True) -> Dict[str, Any]:
        """Structured result document; timings are the only non-deterministic part."""
        data: Dict[str, Any] = {
            "estimator": self.estimator,
            "beta_hat": self.beta_hat.tolist(),
            "l2_error": self.l2_error,
            "failed": self.failed,
            "flags": dict(self.flags),
            "weights": None if self.weight_solution is None else self.weight_solution.w_hat.w.tolist(),
            "rounded_weights": self.rounded.w_prime.tolist(),
            "zeroed_count": self.rounded.zeroed_count,
            "weight_solver": None if self.weight_solution is None else self.weight_solution.to_dict(),
            "huber": self.huber.to_dict(),
            "lambda_o_used": self.lambda_o_used,
            "config": self.config.to_dict(),
        }
        if include_timings:
            data["stage_timings"] = dict(self.stage_timings)
        return data


def canonical_order(y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Stable lexicographic order of the rows (y_i, X_i1, ..., X_id)."""
    keys = np.column_stack([y, X]).T[::-1]
    return np.lexsort(keys)


def _restore(values: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[order] = values
    return out


def estimate(
    instance: RegressionInstance,
    config: EstimatorConfig,
    ctrl: Optional[SolverControls] = None,
    estimator: str = "robust",
    skip_pruning: bool = False,
    force_uniform_weights: bool = False,
    threshold_scale: float = 0.5,
) -> EstimationResult:
    """
    Run the estimator on one instance.

    Args:
        instance: observed data, optionally with ground truth
        config: tuning parameters
        ctrl: solver controls
        estimator: one of ESTIMATORS
        skip_pruning: use tau_x = inf
        force_uniform_weights: bypass COMPUTE-WEIGHT and keep every sample
        threshold_scale: rounding threshold is threshold_scale / n

    Returns:
        EstimationResult. A failed weight program (value > tau_suc) sets
        failed=True but the stages downstream still run on the best weights
        found, so beta_hat is always reported.
    """
    if estimator not in ESTIMATORS:
        raise ValidationError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    if config.n != instance.n:
        raise ValidationError(f"config was derived for n={config.n} but the instance has n={instance.n}")
    ctrl = ctrl or SolverControls()
    if estimator != "robust":
        skip_pruning = True
        force_uniform_weights = True

    order = canonical_order(instance.y, instance.X)
    y = instance.y[order]
    X = instance.X[order]
    n = instance.n
    timings: Dict[str, float] = {}
    flags: Dict[str, bool] = {}

    start = time.perf_counter()
    tau_x = math.inf if skip_pruning else config.tau_x
    pruned = prune_matrix(X, tau_x)
    timings["pruning"] = time.perf_counter() - start
    if not skip_pruning:
        clipped = int(np.count_nonzero(pruned.X_tilde != X))
        log_message(f"PRUNING: clipped {clipped} of {X.size} entries at tau_x={tau_x:.4g}")

    start = time.perf_counter()
    solution: Optional[WeightSolution] = None
    if not force_uniform_weights:
        try:
            solution = compute_weight(
                pruned, config.lambda_star, config.tau_suc, config.epsilon, config.r ** 2, ctrl
            )
        except NumericalError as e:
            log_warning(f"COMPUTE-WEIGHT failed numerically ({e}); continuing with uniform weights")
            flags["weight_solver_error"] = True
    timings["compute_weight"] = time.perf_counter() - start

    start = time.perf_counter()
    if solution is None:
        rounded = uniform_rounded(n)
    else:
        rounded = round_weights(solution.w_hat, threshold_scale=threshold_scale)
        log_message(f"ROUNDING: zeroed {rounded.zeroed_count} of {n} samples")
    timings["rounding"] = time.perf_counter() - start

    start = time.perf_counter()
    if estimator == "lasso":
        lambda_o = LASSO_SCALE * max(1.0, float(np.max(np.abs(y)))) / math.sqrt(n)
    else:
        lambda_o = config.lambda_o
    objective = HuberObjective(
        lambda_o=lambda_o, lambda_s=config.lambda_s, weights=rounded, y=y, X_tilde=pruned.X_tilde
    )
    beta_hat, diagnostics = solve(objective, ctrl)
    timings["huber"] = time.perf_counter() - start

    failed = solution is not None and not solution.success
    flags["weight_solver_success"] = solution is None or solution.success
    flags["huber_converged"] = diagnostics.converged
    if solution is not None:
        flags["weight_solver_converged"] = solution.converged
        solution = replace(
            solution,
            w_hat=TruncatedSimplexPoint(w=_restore(solution.w_hat.w, order), epsilon=solution.w_hat.epsilon),
        )
    rounded = RoundedWeights(w_prime=_restore(rounded.w_prime, order), zeroed_count=rounded.zeroed_count)

    l2_error = None
    if instance.truth is not None:
        l2_error = float(np.linalg.norm(beta_hat - instance.truth.beta_star))
    if failed:
        log_warning(
            f"COMPUTE-WEIGHT value {solution.value:.6g} exceeds tau_suc {config.tau_suc:.6g}; "
            "result flagged as failed"
        )

    return EstimationResult(
        beta_hat=beta_hat,
        estimator=estimator,
        config=config,
        rounded=rounded,
        weight_solution=solution,
        huber=diagnostics,
        lambda_o_used=lambda_o,
        l2_error=l2_error,
        failed=failed,
        flags=flags,
        stage_timings=timings,
    )
