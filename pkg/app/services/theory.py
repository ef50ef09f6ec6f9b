"""
Closed-form tracking-error constants and bounds, with brute-force oracles.

Everything here is a pure function of its arguments. The oracles
(uniform_sum_S, discounted_sum_S, te_recursive_bound) ship with the library
so reports can show bound, oracle and empirical values side by side.
"""

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import numpy as np

from app.errors import ConfigurationError, DomainError, UnsupportedOperationError
from app.models import EnvelopeKind, LossConstants, TheoryParams
from app.services.weights import one_minus_power, power


@dataclass(frozen=True)
class BoundEnvelope:
    """
    Upper bound on TE(t) for t = 1..horizon.

    `values[t - 1]` holds the bound at time t; it is only guaranteed
    from `valid_from` on.
    """
    values: np.ndarray
    valid_from: int
    kind: EnvelopeKind

    @property
    def horizon(self) -> int:
        return int(self.values.shape[-1])

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    def at(self, t: int) -> float:
        if self.values.ndim != 1:
            raise DomainError("at() needs a single envelope; index per-run envelopes directly")
        if not 1 <= t <= self.horizon:
            raise DomainError(f"t={t} outside envelope horizon [1, {self.horizon}]")
        return float(self.values[t - 1])

    def scaled(self, factor: float) -> "BoundEnvelope":
        return BoundEnvelope(values=self.values * factor, valid_from=self.valid_from, kind=self.kind)


def admissible_eta(mu: float, L: float) -> float:
    """Right end of the contraction range (0, 2/(mu+L)]."""
    return 2.0 / (mu + L)


def validate_eta(eta: float, mu: float, L: float, key: str = "tracker.eta") -> None:
    limit = admissible_eta(mu, L)
    if not 0.0 < eta <= limit:
        raise ConfigurationError(f"{key}={eta:g} outside admissible interval (0, {limit:g}]", key=key)


def contraction(params: TheoryParams) -> float:
    """Per-update factor 1 - eta*mu."""
    return max(0.0, 1.0 - params.eta * params.mu)


def alpha(params: TheoryParams) -> float:
    """Per-time-step contraction (1 - eta*mu)^E."""
    return power(contraction(params), params.E)


def c_prime(constants: LossConstants) -> float:
    """Drift constant (1 + sqrt(L/mu)) * L * C / mu."""
    return (1.0 + math.sqrt(constants.L / constants.mu)) * constants.L * constants.C / constants.mu


def drift_bound_uniform(c_prime_value: float, t: int) -> float:
    """||w*_{t+1} - w*_t|| <= C'/(t+1) under uniform weights."""
    return c_prime_value / (t + 1)


def drift_bound_discounted(c_prime_value: float, gamma: float, t: int) -> float:
    """||w*_{t+1} - w*_t|| <= C'(1-gamma)/(1-gamma^{t+1}) under discounted weights."""
    return c_prime_value * (1.0 - gamma) / one_minus_power(gamma, t + 1)


def global_minimizer_bound(constants: LossConstants) -> float:
    """Upper bound (L/mu) C^2 on ||w*_t||^2."""
    return constants.L / constants.mu * constants.C ** 2


def _check_alpha(alpha_value: float) -> None:
    if not 0.0 <= alpha_value < 1.0:
        raise DomainError(f"alpha must lie in [0, 1) for a contraction, got {alpha_value}")


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")


def uniform_sum_S(t: int, alpha_value: float) -> float:
    """Brute-force S(t) = sum_{i=1}^{t-1} alpha^{t-i} / (i+1)."""
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    i = np.arange(1, t, dtype=float)
    with np.errstate(under="ignore"):
        terms = np.power(alpha_value, t - i) / (i + 1.0)
    return math.fsum(terms)


def uniform_sum_lower_bound(t: int, alpha_value: float) -> float:
    """(alpha/t)(1 - alpha^{t-1})/(1 - alpha), a matching O(1/t) lower bound on S(t)."""
    _check_alpha(alpha_value)
    return alpha_value / t * one_minus_power(alpha_value, t - 1) / (1.0 - alpha_value)


def uniform_sum_constants(alpha_value: float) -> Tuple[float, int]:
    """(A, t0) with S(t) <= A/t for every t >= t0."""
    _check_alpha(alpha_value)
    ratio = 2.0 * alpha_value / (1.0 - alpha_value)
    t0 = max(1, math.ceil(ratio))
    return max(t0 * uniform_sum_S(t0, alpha_value), ratio), t0


def discounted_sum_S(t: int, alpha_value: float, gamma: float) -> float:
    """Brute-force S(t) = sum_{i=1}^{t-1} (1-gamma) alpha^{t-i} / (1 - gamma^{i+1})."""
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    _check_gamma(gamma)
    i = np.arange(1, t, dtype=float)
    with np.errstate(under="ignore"):
        terms = (1.0 - gamma) * np.power(alpha_value, t - i) / -np.expm1((i + 1.0) * math.log(gamma))
    return math.fsum(terms)


def discounted_sum_limit(alpha_value: float, gamma: float) -> float:
    """lim S(t) = (1-gamma) alpha / (1-alpha)."""
    _check_alpha(alpha_value)
    return (1.0 - gamma) * alpha_value / (1.0 - alpha_value)


def discounted_sum_constants(alpha_value: float, gamma: float) -> Tuple[float, int]:
    """(A_gamma, t0) with S(t) <= A_gamma (1-gamma)/(1-gamma^t) for every t >= t0."""
    _check_alpha(alpha_value)
    _check_gamma(gamma)
    ratio = (1.0 - alpha_value) / (1.0 + alpha_value - 2.0 * gamma * alpha_value)
    t0 = max(1, math.ceil(math.log(ratio) / math.log(gamma)))
    head = one_minus_power(gamma, t0) * discounted_sum_S(t0, alpha_value, gamma) / (1.0 - gamma)
    return max(head, 2.0 * alpha_value / (1.0 - alpha_value)), t0


def _combine(alpha_value: float, init_gap, drift_term: np.ndarray) -> np.ndarray:
    """alpha^t * gap + drift_term, with one row per gap when gaps are an array."""
    t = np.arange(1, drift_term.shape[0] + 1, dtype=float)
    with np.errstate(under="ignore"):
        geometric = np.power(alpha_value, t)
    gap = np.asarray(init_gap, dtype=float)
    if gap.ndim == 0:
        return geometric * float(gap) + drift_term
    return geometric[None, :] * gap[:, None] + drift_term[None, :]


def te_envelope_uniform(params: TheoryParams, init_gap, horizon: int) -> BoundEnvelope:
    """
    TE(t) <= alpha^t * ||w_0 - w*_1|| + C' A / t for t >= t0.

    `init_gap` may be a scalar or an array of per-run gaps; the result then
    carries one envelope row per run.
    """
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    a = alpha(params)
    A, t0 = uniform_sum_constants(a)
    t = np.arange(1, horizon + 1, dtype=float)
    values = _combine(a, init_gap, c_prime(params.constants) * A / t)
    return BoundEnvelope(values=values, valid_from=t0, kind=EnvelopeKind.UNIFORM_TE)


def te_envelope_discounted(params: TheoryParams, init_gap, horizon: int) -> BoundEnvelope:
    """TE(t) <= alpha^t * ||w_0 - w*_1|| + C' A_gamma (1-gamma)/(1-gamma^t) for t >= t0."""
    if params.gamma is None:
        raise UnsupportedOperationError("the discounted envelope needs gamma")
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1, got {horizon}")
    a = alpha(params)
    gamma = params.gamma
    A_gamma, t0 = discounted_sum_constants(a, gamma)
    t = np.arange(1, horizon + 1, dtype=float)
    tail = (1.0 - gamma) / -np.expm1(t * math.log(gamma))
    values = _combine(a, init_gap, c_prime(params.constants) * A_gamma * tail)
    return BoundEnvelope(values=values, valid_from=t0, kind=EnvelopeKind.DISCOUNTED_TE)


def te_envelope(params: TheoryParams, init_gap, horizon: int) -> BoundEnvelope:
    if params.gamma is None:
        return te_envelope_uniform(params, init_gap, horizon)
    return te_envelope_discounted(params, init_gap, horizon)


def te_recursive_bound(alpha_value: float, init_gap, drifts: np.ndarray) -> np.ndarray:
    """
    Sharper bound alpha^t g + sum_{i=1}^{t-1} alpha^{t-i} d_{i+1} from a run's drifts.

    drifts[..., t-1] is ||w*_t - w*_{t-1}|| (the t = 1 entry is ignored).
    """
    drifts = np.asarray(drifts, dtype=float)
    out = np.empty_like(drifts)
    bound = alpha_value * np.asarray(init_gap, dtype=float)
    out[..., 0] = bound
    for k in range(1, drifts.shape[-1]):
        bound = alpha_value * (bound + drifts[..., k])
        out[..., k] = bound
    return out


def ate_floor(params: TheoryParams) -> float:
    """Asymptotic TE bound C'(1-gamma) alpha/(1-alpha) under discounted weights."""
    if params.gamma is None:
        raise UnsupportedOperationError("uniform weights have a vanishing asymptotic TE; no floor")
    return c_prime(params.constants) * discounted_sum_limit(alpha(params), params.gamma)


def min_budget(params: TheoryParams, epsilon: float) -> int:
    """Smallest E with ate_floor <= epsilon."""
    if not epsilon > 0.0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    if params.gamma is None:
        raise UnsupportedOperationError("a minimum budget is only defined for discounted weights")
    rate = contraction(params)
    if rate == 0.0:
        return 1
    target = epsilon / (c_prime(params.constants) * (1.0 - params.gamma) + epsilon)
    E = max(1, math.ceil(math.log(target) / math.log(rate)))
    # settle ceil() round-off against the floor itself
    while ate_floor(params.with_budget(E)) > epsilon:
        E += 1
    while E > 1 and ate_floor(params.with_budget(E - 1)) <= epsilon:
        E -= 1
    return E


def improvement_factor(eta: float, mu: float, E_low: int, E_high: int) -> float:
    """(1 - eta*mu)^(E_high - E_low): predicted TE ratio when the budget grows."""
    return power(max(0.0, 1.0 - eta * mu), E_high - E_low)


def recursion_limit(
    alpha_value: float,
    b_sequence: Union[Callable[[int], float], Sequence[float]],
    x0: float,
    horizon: int,
) -> float:
    """Iterate x_{t+1} = alpha x_t + b_t for `horizon` steps and return x_horizon."""
    b_at = b_sequence if callable(b_sequence) else b_sequence.__getitem__
    x = float(x0)
    for t in range(horizon):
        x = alpha_value * x + float(b_at(t))
    return x
