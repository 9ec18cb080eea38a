"""
ROUNDING (also called TRUNCATION): discretize weights to {0, 1/n}.

w'_i = 1/n when w_i >= 1/(2n) and 0 otherwise. The rounded weights are not
renormalized; the Huber stage consumes n * w'_i in {0, 1} directly.
"""

from dataclasses import dataclass

import numpy as np

from model_core import ValidationError
from weight_solver import TruncatedSimplexPoint


@dataclass(frozen=True)
class RoundedWeights:
    w_prime: np.ndarray
    zeroed_count: int

    def __post_init__(self):
        w = np.asarray(self.w_prime, dtype=float)
        object.__setattr__(self, "w_prime", w)
        if w.ndim != 1 or w.shape[0] < 1:
            raise ValidationError("w_prime must be a non-empty vector")
        n = w.shape[0]
        if not np.all((w == 0.0) | (w == 1.0 / n)):
            raise ValidationError("rounded weights must be exactly 0 or 1/n")
        if self.zeroed_count != int(np.count_nonzero(w == 0.0)):
            raise ValidationError("zeroed_count must equal the number of zero weights")

    @property
    def n(self) -> int:
        return self.w_prime.shape[0]

    @property
    def retained(self) -> np.ndarray:
        """Boolean mask of samples kept by the rounding."""
        return self.w_prime > 0.0

    @property
    def multipliers(self) -> np.ndarray:
        """n * w'_i, each exactly 0.0 or 1.0."""
        return self.retained.astype(float)


def round_weights(w, threshold_scale: float = 0.5) -> RoundedWeights:
    """
    Round a truncated-simplex point to {0, 1/n}.

    Args:
        w: TruncatedSimplexPoint, or a raw weight vector validated as one with
            the smallest epsilon whose cap admits it
        threshold_scale: weights >= threshold_scale / n are kept; 0.5 gives the
            1/(2n) threshold. Other values exist only for fault injection.

    Returns:
        RoundedWeights; at most 2 * epsilon * n entries are zeroed
    """
    if not isinstance(w, TruncatedSimplexPoint):
        w = np.asarray(w, dtype=float)
        if w.ndim != 1 or w.shape[0] < 1:
            raise ValidationError("w must be a non-empty vector")
        largest = float(np.max(w))
        epsilon = max(0.0, 1.0 - 1.0 / (w.shape[0] * largest)) if largest > 0 else 0.0
        w = TruncatedSimplexPoint(w=w, epsilon=epsilon)
    n = w.n
    keep = w.w >= threshold_scale / n
    w_prime = np.where(keep, 1.0 / n, 0.0)
    return RoundedWeights(w_prime=w_prime, zeroed_count=int(n - np.count_nonzero(keep)))


def uniform_rounded(n: int) -> RoundedWeights:
    """All samples retained."""
    return RoundedWeights(w_prime=np.full(n, 1.0 / n), zeroed_count=0)
