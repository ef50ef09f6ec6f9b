"""
Unit tests for tracking-error constants, envelopes and budget certificates.
"""

import math

import numpy as np
import pytest

from app.errors import ConfigurationError, DomainError, UnsupportedOperationError
from app.models import EnvelopeKind, LossConstants, TheoryParams
from app.services.theory import (
    BoundEnvelope,
    admissible_eta,
    alpha,
    ate_floor,
    c_prime,
    discounted_sum_S,
    discounted_sum_constants,
    discounted_sum_limit,
    drift_bound_discounted,
    drift_bound_uniform,
    global_minimizer_bound,
    improvement_factor,
    min_budget,
    recursion_limit,
    te_envelope,
    te_envelope_discounted,
    te_envelope_uniform,
    te_recursive_bound,
    uniform_sum_S,
    uniform_sum_constants,
    uniform_sum_lower_bound,
    validate_eta,
)

FIG1 = TheoryParams(mu=0.1, L=0.1, C=100.0, eta=2.0, E=10)
FIG2 = TheoryParams(mu=0.1, L=0.1, C=100.0, eta=2.85, E=20, gamma=0.7)


def test_alpha_examples():
    """Test alpha = (1 - eta*mu)^E for the figure parameters."""
    assert alpha(FIG1) == pytest.approx(0.1073741824, rel=1e-12)
    assert alpha(FIG2) == pytest.approx(0.715 ** 20, rel=1e-12)
    assert alpha(FIG2) == pytest.approx(1.2159e-3, rel=5e-3)


def test_budget_must_be_positive():
    """Test E = 0 is outside the domain."""
    with pytest.raises(ValueError):
        TheoryParams(mu=0.1, L=0.1, C=100.0, eta=2.0, E=0)


def test_c_prime_and_drift_bounds():
    """Test C' = 200 for mu = L = 0.1, C = 100 and the derived drift bounds."""
    cp = c_prime(LossConstants(mu=0.1, L=0.1, C=100.0))

    assert cp == pytest.approx(200.0)
    assert drift_bound_uniform(cp, 9) == pytest.approx(20.0)
    assert drift_bound_discounted(cp, 0.5, 1) == pytest.approx(200.0 * 0.5 / 0.75)
    assert global_minimizer_bound(LossConstants(mu=0.1, L=0.4, C=10.0)) == pytest.approx(400.0)


def test_uniform_sum_examples():
    """Test S(1) = 0 and S(3) at alpha = 0.5."""
    assert uniform_sum_S(1, 0.5) == 0.0
    assert uniform_sum_S(3, 0.5) == pytest.approx(0.25 / 2 + 0.5 / 3, abs=1e-15)


def test_uniform_sum_recursion_identity():
    """Test S(t+1) = alpha/(t+1) + alpha S(t)."""
    for a in (0.1, 0.5, 0.9):
        for t in range(1, 60):
            expected = a / (t + 1) + a * uniform_sum_S(t, a)
            assert uniform_sum_S(t + 1, a) == pytest.approx(expected, abs=1e-14)


def test_uniform_sum_constants_examples():
    """Test (A, t0) for the figure-1 alpha, alpha = 0.5 and alpha = 0."""
    a = alpha(FIG1)
    A, t0 = uniform_sum_constants(a)
    assert t0 == 1
    assert A == pytest.approx(2 * a / (1 - a))
    assert A == pytest.approx(0.2406, abs=1e-4)

    assert uniform_sum_constants(0.5) == (pytest.approx(2.0), 2)
    assert uniform_sum_constants(0.0) == (0.0, 1)


def test_uniform_sum_rejects_non_contraction():
    """Test alpha >= 1 raises."""
    with pytest.raises(DomainError):
        uniform_sum_constants(1.0)


def test_uniform_sum_bound_and_tightness_sweep():
    """Test A/t upper and matching lower bounds on S(t) for 50 random alphas."""
    rng = np.random.default_rng(2024)
    for a in rng.uniform(0.0, 0.95, size=50):
        A, t0 = uniform_sum_constants(a)
        for t in range(t0, 1001):
            s = uniform_sum_S(t, a)
            assert s <= A / t * (1 + 1e-12)
            assert s >= uniform_sum_lower_bound(t, a) * (1 - 1e-12)


def test_discounted_sum_examples():
    """Test S(1) = 0, S(2) = 1/3 and the t -> infinity limit at alpha = gamma = 0.5."""
    assert discounted_sum_S(1, 0.5, 0.5) == 0.0
    assert discounted_sum_S(2, 0.5, 0.5) == pytest.approx(1 / 3, abs=1e-15)
    assert abs(discounted_sum_S(200, 0.5, 0.5) - 0.5) <= 1e-10
    assert discounted_sum_limit(0.5, 0.5) == pytest.approx(0.5)


def test_discounted_sum_constants_examples():
    """Test t0 = 1 for the figure-2 E=10 alpha and A_gamma = 2 at alpha = gamma = 0.5."""
    a = alpha(FIG2.with_budget(10))
    assert a == pytest.approx(0.034873, rel=5e-3)
    assert discounted_sum_constants(a, 0.7)[1] == 1

    A_gamma, t0 = discounted_sum_constants(0.5, 0.5)
    assert t0 == 1
    assert A_gamma == pytest.approx(2.0)


def test_discounted_sum_bound_and_limit_sweep():
    """Test A_gamma (1-gamma)/(1-gamma^t) bounds S(t) and S approaches its limit."""
    rng = np.random.default_rng(99)
    for a, gamma in zip(rng.uniform(0.0, 0.95, size=50), rng.uniform(0.05, 0.99, size=50)):
        A_gamma, t0 = discounted_sum_constants(a, gamma)
        for t in range(t0, 1001):
            envelope = A_gamma * (1 - gamma) / -math.expm1(t * math.log(gamma))
            assert discounted_sum_S(t, a, gamma) <= envelope * (1 + 1e-12)

        horizon = max(2, math.ceil(math.log(1e-12) / math.log(a))) if a > 0 else 2
        # the 1/(1 - gamma^(i+1)) factors also need gamma^horizon to be negligible
        horizon = max(horizon, math.ceil(math.log(1e-12) / math.log(gamma)) * 2)
        limit = discounted_sum_limit(a, gamma)
        assert abs(discounted_sum_S(horizon, a, gamma) - limit) <= 1e-8


def test_uniform_envelope_value():
    """Test the envelope at t=10 for the figure-1 constants with init_gap 10."""
    env = te_envelope_uniform(FIG1, 10.0, 20)
    a = alpha(FIG1)
    A, _ = uniform_sum_constants(a)

    assert env.kind == EnvelopeKind.UNIFORM_TE
    assert env.valid_from == 1
    assert env.at(10) == pytest.approx(a ** 10 * 10 + 200 * A / 10, rel=1e-12)
    assert env.at(10) == pytest.approx(4.81, abs=0.01)


def test_envelope_dominates_oracle_sum():
    """Test alpha^t g + C' S(t) <= envelope(t) for t >= t0."""
    params = TheoryParams(mu=0.1, L=0.3, C=50.0, eta=4.0, E=2)
    env = te_envelope_uniform(params, 3.0, 400)
    a = alpha(params)
    cp = c_prime(params.constants)
    for t in range(env.valid_from, 401):
        assert a ** t * 3.0 + cp * uniform_sum_S(t, a) <= env.at(t) * (1 + 1e-12)


def test_perfect_tracker_envelope_is_zero():
    """Test init_gap = 0 and alpha = 0 give an all-zero envelope."""
    params = TheoryParams(mu=0.1, L=0.1, C=100.0, eta=10.0, E=1)

    assert alpha(params) == 0.0
    np.testing.assert_array_equal(te_envelope_uniform(params, 0.0, 30).values, np.zeros(30))
    np.testing.assert_array_equal(
        te_envelope_discounted(params.model_copy(update={"gamma": 0.7}), 0.0, 30).values, np.zeros(30)
    )


def test_discounted_envelope_floor():
    """Test the late-horizon discounted envelope approaches C' A_gamma (1-gamma)."""
    env = te_envelope(FIG2, 5.0, 1000)
    A_gamma, t0 = discounted_sum_constants(alpha(FIG2), 0.7)

    assert env.kind == EnvelopeKind.DISCOUNTED_TE
    assert env.valid_from == t0
    assert env.at(1000) == pytest.approx(200 * A_gamma * 0.3, rel=1e-9)
    assert ate_floor(FIG2) == pytest.approx(0.07305, rel=5e-3)
    assert ate_floor(FIG2) <= 0.1


def test_discounted_envelope_near_uniform():
    """Test gamma close to one tracks the uniform envelope at moderate t."""
    uniform = te_envelope(FIG1, 1.0, 100)
    near = te_envelope(FIG1.model_copy(update={"gamma": 0.999}), 1.0, 100)

    ratio = near.values[49:] / uniform.values[49:]
    assert np.all(ratio > 0.5)
    assert np.all(ratio < 2.0)


def test_per_run_envelopes():
    """Test an array of initial gaps yields one envelope row per run."""
    env = te_envelope(FIG2, np.array([0.0, 1.0, 4.0]), 50)

    assert env.values.shape == (3, 50)
    assert np.all(env.values[2] >= env.values[1])
    with pytest.raises(DomainError):
        env.at(3)
    np.testing.assert_allclose(env.scaled(0.5).values, env.values * 0.5)


def test_envelope_index_checked():
    """Test at() outside the horizon raises."""
    env = te_envelope(FIG1, 1.0, 10)

    with pytest.raises(DomainError):
        env.at(0)
    with pytest.raises(DomainError):
        env.at(11)
    with pytest.raises(DomainError):
        te_envelope(FIG1, 1.0, 0)


def test_envelope_never_grows_with_budget():
    """Test raising E never raises any envelope value."""
    for gamma in (None, 0.7):
        previous = None
        for E in range(1, 30):
            params = FIG2.model_copy(update={"E": E, "gamma": gamma})
            values = te_envelope(params, 2.0, 300).values
            if previous is not None:
                assert np.all(values <= previous * (1 + 1e-12))
            previous = values


def test_ate_floor_examples():
    """Test floors at E = 10 for gamma = 0.7 and gamma = 0.99."""
    assert ate_floor(FIG2.with_budget(10)) == pytest.approx(2.168, rel=5e-3)
    assert ate_floor(FIG2.model_copy(update={"E": 10, "gamma": 0.99})) == pytest.approx(0.07227, rel=5e-3)
    assert ate_floor(TheoryParams(mu=0.1, L=0.1, C=100.0, eta=10.0, E=1, gamma=0.7)) == 0.0


def test_ate_floor_unsupported_for_uniform():
    """Test the uniform scheme has no floor to report."""
    with pytest.raises(UnsupportedOperationError):
        ate_floor(FIG1)
    with pytest.raises(UnsupportedOperationError):
        te_envelope_discounted(FIG1, 1.0, 10)


def test_min_budget_for_figure_two():
    """Test epsilon = 0.1 needs E* = 20 and E* - 1 is not enough."""
    budget = min_budget(FIG2, 0.1)

    assert budget == 20
    assert ate_floor(FIG2.with_budget(20)) <= 0.1
    assert ate_floor(FIG2.with_budget(19)) > 0.1


def test_min_budget_loose_target():
    """Test a target above the E=1 floor returns 1."""
    loose = ate_floor(FIG2.with_budget(1)) * 1.01

    assert min_budget(FIG2, loose) == 1


def test_min_budget_domain():
    """Test epsilon <= 0 and uniform weights are rejected."""
    with pytest.raises(DomainError):
        min_budget(FIG2, 0.0)
    with pytest.raises(UnsupportedOperationError):
        min_budget(FIG1, 0.1)


def test_min_budget_random_consistency():
    """Test ate_floor(min_budget(eps)) <= eps < ate_floor(min_budget(eps) - 1)."""
    rng = np.random.default_rng(17)
    for _ in range(100):
        mu = rng.uniform(0.05, 1.0)
        L = mu * rng.uniform(1.0, 5.0)
        params = TheoryParams(
            mu=mu, L=L, C=rng.uniform(1.0, 100.0),
            eta=rng.uniform(0.1, 1.0) * admissible_eta(mu, L),
            gamma=rng.uniform(0.05, 0.99),
        )
        eps = 10 ** rng.uniform(-3, 1)
        budget = min_budget(params, eps)
        assert ate_floor(params.with_budget(budget)) <= eps
        if budget > 1:
            assert ate_floor(params.with_budget(budget - 1)) > eps


def test_improvement_factor():
    """Test doubling E from 10 to 20 at eta = 2, mu = 0.1 predicts 0.8^10."""
    assert improvement_factor(2.0, 0.1, 10, 20) == pytest.approx(0.107374, rel=1e-5)


def test_recursive_bound_from_drifts():
    """Test the recursion alpha (bound + drift) unrolled from the initial gap."""
    drifts = np.array([0.0, 1.0, 0.5, 0.0])
    bound = te_recursive_bound(0.5, 2.0, drifts)

    np.testing.assert_allclose(bound, [1.0, 1.0, 0.75, 0.375])
    rows = te_recursive_bound(0.5, np.array([2.0, 0.0]), np.tile(drifts, (2, 1)))
    np.testing.assert_allclose(rows[1], [0.0, 0.5, 0.5, 0.25])


def test_recursion_limits():
    """Test x_{t+1} = alpha x_t + b_t converges to b*/(1 - alpha)."""
    assert abs(recursion_limit(0.5, lambda t: 1.0, 0.0, 100) - 2.0) <= 1e-12
    assert abs(recursion_limit(0.9, lambda t: 1.0 + 1.0 / (t + 1), 5.0, 2000) - 10.0) <= 1e-2
    assert recursion_limit(0.5, [0.0] * 60, 3.0, 60) == pytest.approx(0.0, abs=1e-15)


def test_step_size_validation():
    """Test the admissible interval is (0, 2/(mu+L)]."""
    assert admissible_eta(0.1, 0.1) == pytest.approx(10.0)
    validate_eta(10.0, 0.1, 0.1)

    with pytest.raises(ConfigurationError) as excinfo:
        validate_eta(25.0, 0.1, 0.1)
    assert "(0, 10]" in str(excinfo.value)
    with pytest.raises(ConfigurationError):
        validate_eta(0.0, 0.1, 0.1)


def test_bound_envelope_helpers():
    """Test horizon and time grid of an envelope."""
    env = BoundEnvelope(values=np.array([3.0, 2.0, 1.0]), valid_from=2, kind=EnvelopeKind.UNIFORM_TE)

    assert env.horizon == 3
    np.testing.assert_array_equal(env.t, [1, 2, 3])
