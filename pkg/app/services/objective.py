"""
Streaming objective F_t(w) = sum_i a_i(t) f_i(w) over diagonal quadratic losses.

For uniform and discounted schemes the objective keeps three running
weighted sums, updated in O(d) per absorbed sample:
    curvature   Q_t = sum_i a_i(t) q_i
    moment      M_t = sum_i a_i(t) q_i * c_i
    energy      K_t = sum_i a_i(t) q_i * c_i^2
so that grad F_t(w) = Q_t * w - M_t and argmin F_t = M_t / Q_t elementwise.
Custom schemes fall back to direct summation over the retained history.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from app.errors import ConfigurationError, DomainError, EmptyObjectiveError
from app.models import WeightKind
from app.services.losses import QuadraticLoss, as_vector, loss_value
from app.services.weights import WeightScheme, recursion_coeffs, weights_at


@dataclass(frozen=True)
class ObjectiveSnapshot:
    """Immutable view of F_t through its running weighted sums."""
    t: int
    curvature: np.ndarray
    moment: np.ndarray
    energy: np.ndarray

    def gradient(self, w) -> np.ndarray:
        return self.curvature * as_vector(w, self.curvature.shape[0]) - self.moment

    def minimizer(self) -> np.ndarray:
        return self.moment / self.curvature

    def value(self, w) -> float:
        w = as_vector(w, self.curvature.shape[0])
        return 0.5 * float(np.sum(self.curvature * w * w - 2.0 * self.moment * w + self.energy))


class StreamingObjective:
    """
    Weighted average loss over every sample absorbed so far.

    The full history is kept by default so the recursive path can be checked
    against direct summation; pass keep_history=False for long runs once
    that equivalence has been established.
    """

    def __init__(self, scheme: WeightScheme, keep_history: bool = True):
        if scheme.kind == WeightKind.CUSTOM and not keep_history:
            raise ConfigurationError(
                "custom weight schemes are evaluated by direct summation and need the history",
                key="objective.keep_history",
            )
        self.scheme = scheme
        self.keep_history = keep_history
        self.history: List[QuadraticLoss] = []
        self.t = 0
        self._dim: Optional[int] = None
        self._curvature: Optional[np.ndarray] = None
        self._moment: Optional[np.ndarray] = None
        self._energy: Optional[np.ndarray] = None

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    @property
    def fast_path(self) -> bool:
        return self.scheme.kind != WeightKind.CUSTOM

    def absorb(self, new_loss: QuadraticLoss) -> "StreamingObjective":
        """Fold sample t+1 into the objective; returns self."""
        if self._dim is not None and new_loss.dim != self._dim:
            raise DomainError(f"dimension mismatch: objective has d={self._dim}, sample has d={new_loss.dim}")
        self._dim = new_loss.dim

        if self.fast_path:
            q, c = new_loss.curvature, new_loss.center
            if self.t == 0:
                self._curvature = q.copy()
                self._moment = q * c
                self._energy = q * c * c
            else:
                coeffs = recursion_coeffs(self.scheme, self.t)
                self._curvature = coeffs.carry * self._curvature + coeffs.fresh * q
                self._moment = coeffs.carry * self._moment + coeffs.fresh * (q * c)
                self._energy = coeffs.carry * self._energy + coeffs.fresh * (q * c * c)

        if self.keep_history:
            self.history.append(new_loss)
        self.t += 1
        return self

    def _require_samples(self) -> None:
        if self.t == 0:
            raise EmptyObjectiveError("objective is empty: absorb a sample before querying it")

    def _require_history(self) -> None:
        self._require_samples()
        if not self.keep_history:
            raise DomainError("history was dropped; direct summation is unavailable")

    def snapshot(self) -> ObjectiveSnapshot:
        self._require_samples()
        if not self.fast_path:
            weights = weights_at(self.scheme, self.t)
            q = np.array([loss.curvature for loss in self.history])
            c = np.array([loss.center for loss in self.history])
            curvature = weights @ q
            moment = weights @ (q * c)
            energy = weights @ (q * c * c)
        else:
            curvature, moment, energy = self._curvature, self._moment, self._energy
        return ObjectiveSnapshot(self.t, curvature.copy(), moment.copy(), energy.copy())

    @property
    def weighted_center(self) -> np.ndarray:
        """sum_i a_i(t) c_i when all curvatures agree; curvature-weighted otherwise."""
        return self.exact_minimizer()

    def gradient(self, w) -> np.ndarray:
        """sum_i a_i(t) grad f_i(w)."""
        self._require_samples()
        if not self.fast_path:
            return self.direct_gradient(w)
        return self._curvature * as_vector(w, self._dim) - self._moment

    def direct_gradient(self, w) -> np.ndarray:
        """Gradient by explicit summation over the retained history."""
        self._require_history()
        w = as_vector(w, self._dim)
        weights = weights_at(self.scheme, self.t)
        total = np.zeros(self._dim)
        for a_i, loss in zip(weights, self.history):
            total += a_i * (loss.curvature * (w - loss.center))
        return total

    def exact_minimizer(self) -> np.ndarray:
        """argmin F_t, exact for diagonal quadratics."""
        return self.snapshot().minimizer()

    def value(self, w) -> float:
        return self.snapshot().value(w)

    def direct_value(self, w) -> float:
        self._require_history()
        weights = weights_at(self.scheme, self.t)
        return float(sum(a_i * loss_value(loss, w) for a_i, loss in zip(weights, self.history)))


def absorb(obj: StreamingObjective, new_loss: QuadraticLoss) -> StreamingObjective:
    return obj.absorb(new_loss)


def gradient(obj: StreamingObjective, w) -> np.ndarray:
    return obj.gradient(w)


def exact_minimizer(obj: StreamingObjective) -> np.ndarray:
    return obj.exact_minimizer()


def objective_value(obj: StreamingObjective, w) -> float:
    return obj.direct_value(w) if obj.keep_history else obj.value(w)


def minimizer_drift(previous: np.ndarray, current: np.ndarray) -> float:
    """||w*_{t+1} - w*_t||."""
    return float(np.linalg.norm(np.asarray(current) - np.asarray(previous)))


class ObjectiveBank:
    """
    R independent streaming objectives advanced in lock-step.

    Row r of every array belongs to stream r; all rows share the scheme and
    time index, so one set of recursion coefficients serves the whole bank.
    No history is retained.
    """

    def __init__(self, scheme: WeightScheme, runs: int, dim: int):
        if scheme.kind == WeightKind.CUSTOM:
            raise ConfigurationError(
                "objective banks need a recursive scheme (uniform or discounted)", key="scheme.kind"
            )
        self.scheme = scheme
        self.runs = runs
        self.dim = dim
        self.t = 0
        self._curvature = np.zeros((runs, dim))
        self._moment = np.zeros((runs, dim))

    def absorb(self, centers: np.ndarray, curvature: np.ndarray) -> "ObjectiveBank":
        """centers: (R, d); curvature: (d,) shared or (R, d) per stream."""
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != (self.runs, self.dim):
            raise DomainError(f"expected centers of shape {(self.runs, self.dim)}, got {centers.shape}")
        q = np.broadcast_to(np.asarray(curvature, dtype=np.float64), centers.shape)
        if self.t == 0:
            self._curvature = np.array(q)
            self._moment = q * centers
        else:
            coeffs = recursion_coeffs(self.scheme, self.t)
            self._curvature = coeffs.carry * self._curvature + coeffs.fresh * q
            self._moment = coeffs.carry * self._moment + coeffs.fresh * (q * centers)
        self.t += 1
        return self

    def gradient(self, w: np.ndarray) -> np.ndarray:
        if self.t == 0:
            raise EmptyObjectiveError("objective bank is empty")
        return self._curvature * w - self._moment

    def exact_minimizer(self) -> np.ndarray:
        if self.t == 0:
            raise EmptyObjectiveError("objective bank is empty")
        return self._moment / self._curvature


def equivalence_gap(scheme: WeightScheme, losses: Iterable[QuadraticLoss], points: np.ndarray) -> float:
    """
    Largest max-norm gap between the recursive gradient and direct summation,
    over every prefix of `losses` and every row of `points`.
    """
    obj = StreamingObjective(scheme, keep_history=True)
    worst = 0.0
    for loss in losses:
        obj.absorb(loss)
        for w in points:
            gap = obj.gradient(w) - obj.direct_gradient(w)
            worst = max(worst, float(np.max(np.abs(gap))))
    return worst
