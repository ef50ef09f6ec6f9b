"""
Temporal weighting schemes a_i(t) for the streaming objective.
Uniform and discounted schemes also expose the O(1) recursion
F_{t+1} = carry * F_t + fresh * f_{t+1}.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from app.config import settings
from app.errors import ConfigurationError, DomainError, UnsupportedOperationError
from app.models import SchemeConfig, WeightKind

WeightFn = Callable[[int, int], float]

_SUM_TOL = 1e-12
# above this base, 1 - base**n loses digits to cancellation
_NEAR_ONE = 0.999


@dataclass(frozen=True)
class RecursionCoefficients:
    """Multipliers on the previous objective and on the fresh sample loss."""
    carry: float
    fresh: float


@dataclass(frozen=True)
class WeightScheme:
    """
    A rule producing the coefficients a_i(t), 1 <= i <= t.

    Custom schemes carry a callable (i, t) -> a_i(t); its vectors are
    checked for nonnegativity and normalization the first time each t is used.
    """
    kind: WeightKind
    gamma: Optional[float] = None
    weight_fn: Optional[WeightFn] = field(default=None, compare=False, repr=False)
    _checked: Dict[int, np.ndarray] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == WeightKind.DISCOUNTED:
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ConfigurationError(
                    f"discounted scheme needs 0 < gamma < 1, got {self.gamma}", key="scheme.gamma"
                )
        elif self.kind == WeightKind.CUSTOM:
            if self.weight_fn is None:
                raise ConfigurationError("custom scheme needs a weight function", key="scheme.kind")
        elif self.gamma is not None:
            raise ConfigurationError("gamma only applies to the discounted scheme", key="scheme.gamma")

    @classmethod
    def uniform(cls) -> "WeightScheme":
        return cls(WeightKind.UNIFORM)

    @classmethod
    def discounted(cls, gamma: float) -> "WeightScheme":
        return cls(WeightKind.DISCOUNTED, gamma=gamma)

    @classmethod
    def custom(cls, weight_fn: WeightFn) -> "WeightScheme":
        return cls(WeightKind.CUSTOM, weight_fn=weight_fn)

    @classmethod
    def from_config(cls, cfg: SchemeConfig) -> "WeightScheme":
        if cfg.kind == WeightKind.DISCOUNTED:
            return cls.discounted(cfg.gamma)
        return cls.uniform()

    @property
    def label(self) -> str:
        if self.kind == WeightKind.DISCOUNTED:
            return f"discounted_g{self.gamma:g}"
        return self.kind.value


def power(base: float, exponent: int) -> float:
    """base**exponent, switching to log space for long horizons."""
    if base == 0.0:
        return 1.0 if exponent == 0 else 0.0
    if exponent > settings.log_space_threshold:
        return math.exp(exponent * math.log(base))
    return base ** exponent


def one_minus_power(base: float, exponent: int) -> float:
    """1 - base**exponent without cancellation when base is close to 1."""
    if base == 0.0:
        return 1.0 if exponent > 0 else 0.0
    if exponent == 1:
        return 1.0 - base
    if base < _NEAR_ONE:
        return 1.0 - power(base, exponent)
    return -math.expm1(exponent * math.log(base))


def _check_time(t: int) -> None:
    if int(t) != t or t < 1:
        raise DomainError(f"time index must be a positive integer, got {t}")


def weight(scheme: WeightScheme, i: int, t: int) -> float:
    """Return a_i(t) for 1 <= i <= t."""
    _check_time(t)
    if int(i) != i or not 1 <= i <= t:
        raise DomainError(f"sample index i={i} outside [1, {t}]")

    if scheme.kind == WeightKind.UNIFORM:
        return 1.0 / t
    if scheme.kind == WeightKind.DISCOUNTED:
        gamma = scheme.gamma
        return (1.0 - gamma) / one_minus_power(gamma, t) * power(gamma, t - i)
    return float(weights_at(scheme, t)[i - 1])


def weights_at(scheme: WeightScheme, t: int) -> np.ndarray:
    """The full weight vector (a_1(t), ..., a_t(t))."""
    _check_time(t)

    if scheme.kind == WeightKind.UNIFORM:
        return np.full(t, 1.0 / t)

    if scheme.kind == WeightKind.DISCOUNTED:
        gamma = scheme.gamma
        ages = np.arange(t - 1, -1, -1, dtype=float)
        with np.errstate(under="ignore"):
            geometric = np.exp(ages * math.log(gamma))
        return (1.0 - gamma) / one_minus_power(gamma, t) * geometric

    cached = scheme._checked.get(t)
    if cached is not None:
        return cached
    values = np.array([float(scheme.weight_fn(i, t)) for i in range(1, t + 1)])
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise DomainError(f"custom weights at t={t} must lie in [0, 1]")
    total = float(np.sum(values))
    if abs(total - 1.0) > _SUM_TOL:
        raise DomainError(f"custom weights at t={t} sum to {total!r}, expected 1")
    values.setflags(write=False)
    scheme._checked[t] = values
    return values


def recursion_coeffs(scheme: WeightScheme, t: int) -> RecursionCoefficients:
    """Coefficients with F_{t+1}(w) = carry * F_t(w) + fresh * f_{t+1}(w)."""
    _check_time(t)

    if scheme.kind == WeightKind.UNIFORM:
        return RecursionCoefficients(carry=t / (t + 1), fresh=1.0 / (t + 1))

    if scheme.kind == WeightKind.DISCOUNTED:
        gamma = scheme.gamma
        denom = one_minus_power(gamma, t + 1)
        return RecursionCoefficients(
            carry=gamma * one_minus_power(gamma, t) / denom,
            fresh=(1.0 - gamma) / denom,
        )

    raise UnsupportedOperationError(
        "custom weight schemes have no general recursion; sum weights_at(scheme, t) directly"
    )
