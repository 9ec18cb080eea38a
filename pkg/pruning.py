"""
PRUNING: clip every covariate entry to the box [-tau_x, tau_x].

The clipping is symmetric, sgn(x) * min(|x|, tau_x). Entries inside the box
(including |x| == tau_x) are returned unchanged, so the operation is idempotent
and never changes a sign.
"""

import math
from dataclasses import dataclass

import numpy as np

from model_core import ValidationError


@dataclass(frozen=True)
class PrunedMatrix:
    """Clipped covariates X_tilde (n x d) together with the threshold used."""

    X_tilde: np.ndarray
    tau_x: float

    def __post_init__(self):
        if not self.tau_x > 0:
            raise ValidationError(f"tau_x must be positive, got {self.tau_x}")
        X = np.asarray(self.X_tilde, dtype=float)
        object.__setattr__(self, "X_tilde", X)
        if X.ndim != 2:
            raise ValidationError("X_tilde must be a matrix")
        if X.size and float(np.max(np.abs(X))) > self.tau_x:
            raise ValidationError("X_tilde has entries outside [-tau_x, tau_x]")

    @property
    def n(self) -> int:
        return self.X_tilde.shape[0]

    @property
    def d(self) -> int:
        return self.X_tilde.shape[1]


def clip_value(x: float, tau: float) -> float:
    """
    Clip a single value to [-tau, tau].

    Args:
        x: finite real
        tau: positive threshold

    Returns:
        x if |x| <= tau, else sgn(x) * tau
    """
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    if not math.isfinite(x):
        raise ValidationError(f"cannot clip non-finite value {x}")
    if abs(x) <= tau:
        return x
    return math.copysign(tau, x)


def prune_matrix(X: np.ndarray, tau_x: float) -> PrunedMatrix:
    """
    Apply clip_value entrywise.

    Args:
        X: n x d covariate matrix
        tau_x: positive threshold; math.inf leaves X unchanged

    Returns:
        PrunedMatrix with |X_tilde_ij| <= tau_x

    Raises:
        ValidationError: on a non-positive threshold or a non-finite entry (reported with its (i, j))
    """
    if not tau_x > 0:
        raise ValidationError(f"tau_x must be positive, got {tau_x}")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be a matrix")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise ValidationError(f"non-finite covariate {X[i, j]} at (i={i}, j={j})")
    return PrunedMatrix(X_tilde=np.clip(X, -tau_x, tau_x), tau_x=tau_x)
