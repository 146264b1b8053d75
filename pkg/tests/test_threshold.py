import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stgp.threshold import (
    ThresholdLevel,
    prior_inclusion_probability,
    soft_threshold,
    soft_threshold_field,
)

# dyadic floats keep add/subtract exact, so order properties are tested
# without last-ulp rounding noise
dyadic = st.integers(-50 * 2 ** 20, 50 * 2 ** 20).map(lambda k: k * 2.0 ** -20)
dyadic_lam = st.integers(0, 10 * 2 ** 20).map(lambda k: k * 2.0 ** -20)


def test_threshold_level_rejects_negative():
    with pytest.raises(ValueError):
        ThresholdLevel(-0.1)
    with pytest.raises(ValueError):
        soft_threshold(1.0, -2.0)
    ThresholdLevel(0.0)


@pytest.mark.parametrize("x,lam,expected", [
    (0.5, 1.0, 0.0),
    (2.0, 0.5, 1.5),
    (-3.0, 1.0, -2.0),
    (7.3, 0.0, 7.3),
])
def test_soft_threshold_examples(x, lam, expected):
    assert soft_threshold(x, lam) == expected
    assert soft_threshold(x, ThresholdLevel(lam)) == expected


def test_exact_tie_maps_to_zero():
    assert soft_threshold(1.0, 1.0) == 0.0
    assert soft_threshold(-1.0, 1.0) == 0.0


def test_field_examples():
    np.testing.assert_array_equal(
        soft_threshold_field([0.2, -0.1], 0.5), [0.0, 0.0])
    np.testing.assert_array_equal(
        soft_threshold_field([1.5, -2.0, 0.0], 1.0), [0.5, -1.0, 0.0])
    assert soft_threshold_field([], 1.0).shape == (0,)


def test_field_matches_scalar():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=100)
    out = soft_threshold_field(xs, 0.7)
    for x, o in zip(xs, out):
        assert soft_threshold(float(x), 0.7) == o


@given(dyadic, dyadic, dyadic_lam)
@settings(max_examples=300)
def test_lipschitz(x1, x2, lam):
    gap = abs(soft_threshold(x1, lam) - soft_threshold(x2, lam))
    assert gap <= abs(x1 - x2)


@given(dyadic, dyadic_lam)
@settings(max_examples=300)
def test_shrinkage_and_sign(x, lam):
    g = soft_threshold(x, lam)
    assert abs(g) <= abs(x)
    assert np.sign(g) in (0.0, np.sign(x))


@given(dyadic, dyadic_lam, dyadic_lam)
@settings(max_examples=300)
def test_monotone_sparsity(x, lam_a, lam_b):
    lo, hi = sorted((lam_a, lam_b))
    if soft_threshold(x, hi) != 0.0:
        assert soft_threshold(x, lo) != 0.0


def test_prior_inclusion_examples():
    assert prior_inclusion_probability(0.0) == 1.0
    assert abs(prior_inclusion_probability(1.96) - 0.0500) < 1e-4
    assert abs(prior_inclusion_probability(1.43) - 0.1527) < 1e-4


def test_prior_inclusion_strictly_decreasing():
    lams = np.linspace(0, 5, 40)
    probs = [prior_inclusion_probability(l) for l in lams]
    assert all(a > b for a, b in zip(probs, probs[1:]))
