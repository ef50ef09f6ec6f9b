"""
Budgeted gradient-descent tracker.

Per time step: sample t+1 arrives, the objective absorbs it, E fixed-step
GD updates run on F_{t+1} starting from w_t, and TE(t+1) is measured
against the exact minimizer of F_{t+1}.
"""

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np

from app.errors import ContractViolationError
from app.logger import get_logger
from app.models import LossConstants, TrackerConfig
from app.services.losses import QuadraticLoss, as_vector
from app.services.objective import StreamingObjective, minimizer_drift
from app.services.theory import validate_eta
from app.services.weights import WeightScheme

logger = get_logger(__name__)


@dataclass(frozen=True)
class TrackerState:
    """Current iterate w_t at time index t."""
    w: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class RunTrace:
    """Per-time-step record of one seeded run, t = 1..T."""
    t: np.ndarray
    iterates: np.ndarray
    minimizers: np.ndarray
    te: np.ndarray
    drift: np.ndarray
    init_gap: float

    @property
    def horizon(self) -> int:
        return int(self.t.shape[0])


def gd_steps(w: np.ndarray, grad: Callable[[np.ndarray], np.ndarray], eta: float, E: int) -> np.ndarray:
    """E fixed-step updates w <- w - eta * grad(w). Works on any array shape."""
    for _ in range(E):
        w = w - eta * grad(w)
    return w


def step(state: TrackerState, cfg: TrackerConfig, obj: StreamingObjective) -> TrackerState:
    """Run E updates on F_{t+1}; obj must already hold sample t+1."""
    if obj.t != state.t + 1:
        raise ContractViolationError(
            f"step from t={state.t} needs the objective at t={state.t + 1}, got t={obj.t}"
        )
    w = gd_steps(state.w, obj.gradient, cfg.eta, cfg.E)
    return TrackerState(w=w, t=state.t + 1)


def step_instrumented(
    state: TrackerState, cfg: TrackerConfig, obj: StreamingObjective
) -> Tuple[TrackerState, np.ndarray]:
    """Like step, also returning the inner iterates w_{t,0}, ..., w_{t,E}."""
    if obj.t != state.t + 1:
        raise ContractViolationError(
            f"step from t={state.t} needs the objective at t={state.t + 1}, got t={obj.t}"
        )
    inner = [state.w]
    w = state.w
    for _ in range(cfg.E):
        w = w - cfg.eta * obj.gradient(w)
        inner.append(w)
    return TrackerState(w=w, t=state.t + 1), np.array(inner)


def tracking_error(state: TrackerState, obj: StreamingObjective) -> float:
    """TE(t) = ||w_t - argmin F_t||."""
    if state.t != obj.t:
        raise ContractViolationError(f"tracker is at t={state.t}, objective at t={obj.t}")
    return float(np.linalg.norm(state.w - obj.exact_minimizer()))


def recursion_bound(te_prev: float, drift: float, alpha: float) -> float:
    """One-step certificate TE(t+1) <= alpha * (TE(t) + drift)."""
    return alpha * (te_prev + drift)


class Tracker:
    """
    GD tracker bound to validated (eta, E, w0).

    The step size is checked against (0, 2/(mu+L)] once, here; steps never
    re-validate.
    """

    def __init__(self, config: TrackerConfig, constants: LossConstants):
        validate_eta(config.eta, constants.mu, constants.L)
        self.config = config
        self.constants = constants

    def initial_state(self, dim: int) -> TrackerState:
        if self.config.w0 is None:
            return TrackerState(w=np.zeros(dim), t=0)
        w0 = as_vector(self.config.w0)
        if w0.shape[0] == 1 and dim > 1:
            w0 = np.full(dim, w0[0])
        return TrackerState(w=as_vector(w0, dim), t=0)

    def step(self, state: TrackerState, obj: StreamingObjective) -> TrackerState:
        return step(state, self.config, obj)

    def step_instrumented(self, state: TrackerState, obj: StreamingObjective):
        return step_instrumented(state, self.config, obj)

    def tracking_error(self, state: TrackerState, obj: StreamingObjective) -> float:
        return tracking_error(state, obj)

    def run_stream(
        self,
        scheme: WeightScheme,
        losses: Iterable[QuadraticLoss],
        keep_history: bool = False,
        objective: Optional[StreamingObjective] = None,
    ) -> RunTrace:
        """Track one stream end to end; the single-run reference path."""
        obj = objective or StreamingObjective(scheme, keep_history=keep_history)
        state: Optional[TrackerState] = None
        previous_min: Optional[np.ndarray] = None
        init_gap = 0.0
        iterates, minimizers, te, drift = [], [], [], []

        for loss in losses:
            if state is None:
                state = self.initial_state(loss.dim)
            obj.absorb(loss)
            current_min = obj.exact_minimizer()
            if previous_min is None:
                init_gap = float(np.linalg.norm(state.w - current_min))
                drift.append(0.0)
            else:
                drift.append(minimizer_drift(previous_min, current_min))
            state = step(state, self.config, obj)
            iterates.append(state.w)
            minimizers.append(current_min)
            te.append(float(np.linalg.norm(state.w - current_min)))
            previous_min = current_min

        horizon = len(te)
        logger.debug("Stream tracked", extra={"horizon": horizon, "E": self.config.E})
        return RunTrace(
            t=np.arange(1, horizon + 1),
            iterates=np.array(iterates),
            minimizers=np.array(minimizers),
            te=np.array(te),
            drift=np.array(drift),
            init_gap=init_gap,
        )
