"""
Unit tests for temporal weighting schemes.
"""

import numpy as np
import pytest

from app.errors import ConfigurationError, DomainError, UnsupportedOperationError
from app.models import SchemeConfig, WeightKind
from app.services.weights import (
    WeightScheme,
    one_minus_power,
    power,
    recursion_coeffs,
    weight,
    weights_at,
)


def test_uniform_weight_is_equal_split():
    """Test uniform weights give every sample 1/t."""
    assert weight(WeightScheme.uniform(), 3, 5) == pytest.approx(0.2, abs=1e-15)


def test_discounted_weights_hand_values():
    """Test gamma=0.5 at t=3 yields (1/7, 2/7, 4/7)."""
    values = weights_at(WeightScheme.discounted(0.5), 3)

    np.testing.assert_allclose(values, [1 / 7, 2 / 7, 4 / 7], rtol=0, atol=1e-15)
    assert values[1] / values[0] == pytest.approx(2.0)


def test_single_sample_weight_is_exactly_one():
    """Test a_1(1) = 1 exactly under discounting."""
    assert weight(WeightScheme.discounted(0.7), 1, 1) == 1.0
    assert weight(WeightScheme.discounted(0.7), 4, 4) == pytest.approx(0.3 / (1 - 0.7 ** 4))


def test_uniform_recursion_coefficients():
    """Test uniform recursion at t=4 is (0.8, 0.2)."""
    coeffs = recursion_coeffs(WeightScheme.uniform(), 4)

    assert coeffs.carry == pytest.approx(0.8)
    assert coeffs.fresh == pytest.approx(0.2)


def test_discounted_recursion_coefficients():
    """Test gamma=0.5 at t=1 gives (1/3, 2/3), matching the explicit t=2 weights."""
    scheme = WeightScheme.discounted(0.5)
    coeffs = recursion_coeffs(scheme, 1)

    assert coeffs.carry == pytest.approx(1 / 3, abs=1e-15)
    assert coeffs.fresh == pytest.approx(2 / 3, abs=1e-15)
    assert coeffs.carry * weight(scheme, 1, 1) == pytest.approx(weight(scheme, 1, 2), abs=1e-15)


@pytest.mark.parametrize("scheme", [
    WeightScheme.uniform(),
    WeightScheme.discounted(0.5),
    WeightScheme.discounted(0.99),
    WeightScheme.discounted(1 - 1e-6),
])
def test_weights_are_normalized(scheme):
    """Test weights lie in [0, 1] and sum to one up to t = 10^4."""
    for t in list(range(1, 10_001, 37)) + [10_000]:
        values = weights_at(scheme, t)
        assert np.all(values >= 0.0)
        assert np.all(values <= 1.0)
        assert abs(values.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("scheme", [WeightScheme.uniform(), WeightScheme.discounted(0.7)])
def test_recursion_reproduces_next_weights(scheme):
    """Test (carry * a(t), fresh) equals a(t+1) elementwise."""
    for t in range(1, 1001):
        coeffs = recursion_coeffs(scheme, t)
        assert coeffs.carry >= 0.0
        assert 0.0 < coeffs.fresh <= 1.0
        assert abs(coeffs.carry + coeffs.fresh - 1.0) <= 1e-12

        predicted = np.append(coeffs.carry * weights_at(scheme, t), coeffs.fresh)
        np.testing.assert_allclose(predicted, weights_at(scheme, t + 1), rtol=0, atol=1e-12)


def test_discounted_weights_favor_newer_samples():
    """Test a_i(t) < a_{i+1}(t) under discounting."""
    values = weights_at(WeightScheme.discounted(0.9), 50)

    assert np.all(np.diff(values) > 0.0)


def test_discounted_approaches_uniform_as_gamma_tends_to_one():
    """Test gamma = 1 - 1e-6 stays within 1e-6 of 1/t at t=100."""
    values = weights_at(WeightScheme.discounted(1 - 1e-6), 100)

    assert np.max(np.abs(values - 0.01)) <= 1e-6


def test_long_horizon_weights_stay_finite():
    """Test very long discounted horizons neither underflow the normalizer nor produce NaNs."""
    values = weights_at(WeightScheme.discounted(0.999), 50_000)

    assert np.all(np.isfinite(values))
    assert values.sum() == pytest.approx(1.0, abs=1e-12)
    assert weight(WeightScheme.discounted(0.999), 50_000, 50_000) == pytest.approx(0.001, rel=1e-9)


def test_near_one_power_keeps_precision():
    """Test 1 - gamma^n is accurate for gamma close to one."""
    assert one_minus_power(1 - 1e-9, 1) == pytest.approx(1e-9, rel=1e-6)
    assert one_minus_power(1 - 1e-9, 1000) == pytest.approx(1e-6, rel=1e-6)
    assert power(0.9999, 20_000) == pytest.approx(0.9999 ** 20_000, rel=1e-9)
    assert power(0.5, 20_000) < 1e-300


@pytest.mark.parametrize("i,t", [(0, 3), (4, 3), (1, 0)])
def test_out_of_range_indices_rejected(i, t):
    """Test indices outside 1 <= i <= t raise a domain error."""
    with pytest.raises(DomainError):
        weight(WeightScheme.uniform(), i, t)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.2, 1.5])
def test_discounted_gamma_validated(gamma):
    """Test gamma outside (0, 1) is rejected at construction."""
    with pytest.raises(ConfigurationError) as excinfo:
        WeightScheme.discounted(gamma)

    assert excinfo.value.key == "scheme.gamma"


def test_custom_scheme_is_validated_and_cached():
    """Test custom weights are checked once per t and reused read-only."""
    calls = []

    def last_two(i, t):
        calls.append((i, t))
        if t == 1:
            return 1.0
        return {t - 1: 0.25, t: 0.75}.get(i, 0.0)

    scheme = WeightScheme.custom(last_two)
    first = weights_at(scheme, 3)
    count = len(calls)
    second = weights_at(scheme, 3)

    np.testing.assert_allclose(first, [0.0, 0.25, 0.75])
    assert second is first
    assert len(calls) == count
    assert not first.flags.writeable


def test_custom_scheme_rejects_bad_weights():
    """Test unnormalized or negative custom weights raise."""
    with pytest.raises(DomainError):
        weights_at(WeightScheme.custom(lambda i, t: 0.5), 3)
    with pytest.raises(DomainError):
        weights_at(WeightScheme.custom(lambda i, t: 2.0 if i == 1 else -1.0), 2)


def test_custom_scheme_has_no_recursion():
    """Test recursion is unsupported for custom schemes."""
    scheme = WeightScheme.custom(lambda i, t: 1.0 / t)

    with pytest.raises(UnsupportedOperationError):
        recursion_coeffs(scheme, 2)


def test_scheme_from_config_and_label():
    """Test config-driven construction and result labels."""
    discounted = WeightScheme.from_config(SchemeConfig(kind=WeightKind.DISCOUNTED, gamma=0.7))

    assert discounted.gamma == 0.7
    assert discounted.label == "discounted_g0.7"
    assert WeightScheme.from_config(SchemeConfig()).label == "uniform"
