import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from model_core import ValidationError
from rounding import RoundedWeights, round_weights, uniform_rounded
from weight_solver import TruncatedSimplexPoint, project_truncated_simplex


def test_uniform_weights_kept():
    rounded = round_weights(TruncatedSimplexPoint(w=np.full(4, 0.25), epsilon=0.1))
    np.testing.assert_array_equal(rounded.w_prime, np.full(4, 0.25))
    assert rounded.zeroed_count == 0


def test_small_weight_dropped():
    rounded = round_weights(np.array([0.4, 0.3, 0.2, 0.1]))
    np.testing.assert_array_equal(rounded.w_prime, [0.25, 0.25, 0.25, 0.0])
    assert rounded.zeroed_count == 1
    np.testing.assert_array_equal(rounded.multipliers, [1.0, 1.0, 1.0, 0.0])


def test_two_samples_unchanged():
    rounded = round_weights(np.array([0.5, 0.5]))
    np.testing.assert_array_equal(rounded.w_prime, [0.5, 0.5])


def test_threshold_is_inclusive():
    # 1/(2n) itself is kept
    rounded = round_weights(np.array([0.125, 0.375, 0.25, 0.25]))
    assert rounded.zeroed_count == 0


def test_uniform_rounded():
    rounded = uniform_rounded(5)
    assert rounded.n == 5
    assert rounded.retained.all()


def test_validation():
    with pytest.raises(ValidationError):
        RoundedWeights(w_prime=np.array([0.5, 0.4]), zeroed_count=0)
    with pytest.raises(ValidationError):
        RoundedWeights(w_prime=np.array([0.5, 0.0]), zeroed_count=0)
    with pytest.raises(ValidationError):
        round_weights(np.array([0.7, 0.2]))


def test_raised_threshold_breaks_bound():
    rounded = round_weights(np.full(4, 0.25), threshold_scale=2.0)
    assert rounded.zeroed_count == 4


@given(
    v=arrays(float, st.integers(2, 40), elements=st.floats(-5.0, 5.0)),
    eps=st.floats(0.0, 0.45),
)
@settings(deadline=None)
def test_zeroed_count_bounded(v, eps):
    point = project_truncated_simplex(v, eps)
    rounded = round_weights(point)
    assert rounded.zeroed_count <= 2.0 * eps * point.n + 1e-9
    assert np.all((rounded.w_prime == 0.0) | (rounded.w_prime == 1.0 / point.n))
