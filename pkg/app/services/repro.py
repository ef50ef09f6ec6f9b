"""
Baked figure configurations.

fig1: uniform weights, mu = L = 0.1, eta = 2, E in {10, 20}.
fig2: discounted weights with gamma = 0.7, eta = 2.85, E in {5, 10, 20}.
fig3: discount-factor sweep at eta = 2.85, E = 10, with a uniform overlay.
All use a clamped walk with C_max = 100 and sigma^2 = 100, 1000 runs of
1000 steps each.
"""

from typing import Dict, Iterable, List, Optional

from app.configfile import build_config, parse_text
from app.models import ExperimentConfig, FigureId
from app.services.harness import (
    ExperimentResult,
    ate_ratio,
    budget_ratio,
    decay_slope,
    overlay_ratio,
    theory_params,
)
from app.services.theory import ate_floor, improvement_factor, min_budget
from app.services.weights import WeightScheme, weight

FIG3_GAMMAS = (0.5, 0.7, 0.9, 0.99)
EPSILON = 0.1

_COMMON = """
experiment.horizon=1000
experiment.num_runs=1000
loss.mu=0.1
loss.L=0.1
walk.c_max=100
walk.sigma2=100
walk.dim=1
"""

_FIG1 = _COMMON + """
experiment.name=fig1
experiment.E_values=10,20
scheme.kind=uniform
tracker.eta=2
tracker.E=10
"""

_FIG2 = _COMMON + f"""
experiment.name=fig2
experiment.E_values=5,10,20
scheme.kind=discounted
scheme.gamma=0.7
tracker.eta=2.85
tracker.E=20
theory.epsilon={EPSILON}
"""

_FIG3 = _COMMON + """
experiment.name=fig3
tracker.eta=2.85
tracker.E=10
"""


def _build(text: str, extra: Dict[str, str], overrides: Dict[str, str]) -> ExperimentConfig:
    values = parse_text(text, source="repro")
    values.update(extra)
    values.update(overrides)
    return build_config(values)


def figure_configs(
    figure: FigureId,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> List[ExperimentConfig]:
    """Configs for one figure; fig3 yields one config per discount factor plus the uniform overlay."""
    extra = parse_text("\n".join(overrides), source="--set")
    if seed is not None:
        extra["walk.seed"] = str(seed)

    if figure == FigureId.FIG1:
        return [_build(_FIG1, {}, extra)]
    if figure == FigureId.FIG2:
        return [_build(_FIG2, {}, extra)]
    configs = [
        _build(_FIG3, {"scheme.kind": "discounted", "scheme.gamma": repr(gamma)}, extra)
        for gamma in FIG3_GAMMAS
    ]
    configs.append(_build(_FIG3, {"scheme.kind": "uniform"}, extra))
    return configs


def matched_weight_horizon(gamma: float, horizon: int) -> int:
    """
    Last t at which the discounted scheme weights the fresh sample at most
    twice as heavily as uniform weights do.
    """
    discounted = WeightScheme.discounted(gamma)
    uniform = WeightScheme.uniform()
    last = 1
    for t in range(1, horizon + 1):
        if weight(discounted, t, t) > 2.0 * weight(uniform, t, t):
            break
        last = t
    return last


def _fmt(value: float) -> str:
    return repr(float(value))


def figure_metadata(figure: FigureId, results: List[ExperimentResult]) -> Dict[str, str]:
    """Summary checks embedded in the manifests of a reproduced figure."""
    meta: Dict[str, str] = {"figure": figure.value}

    if figure == FigureId.FIG1:
        result = results[0]
        for trace in result.traces:
            meta[f"decay_slope.E{trace.E}"] = _fmt(decay_slope(trace.t, trace.rms_te))
        budgets = sorted(trace.E for trace in result.traces)
        if len(budgets) >= 2:
            low, high = budgets[0], budgets[-1]
            cfg = result.config
            meta[f"budget_ratio.E{high}_over_E{low}"] = _fmt(
                budget_ratio(result.trace(low), result.trace(high), cfg.window_fraction)
            )
            meta["budget_ratio.predicted"] = _fmt(
                improvement_factor(cfg.tracker.eta, cfg.loss.mu, low, high)
            )
        return meta

    if figure == FigureId.FIG2:
        result = results[0]
        cfg = result.config
        for trace in result.traces:
            meta[f"empirical_ate.E{trace.E}"] = _fmt(trace.empirical_ate)
            meta[f"ate_floor.E{trace.E}"] = _fmt(ate_floor(theory_params(cfg, trace.E)))
        if {10, 20} <= {trace.E for trace in result.traces}:
            meta["ate_ratio.E20_over_E10"] = _fmt(ate_ratio(result.trace(10), result.trace(20)))
            meta["ate_ratio.predicted"] = _fmt(improvement_factor(cfg.tracker.eta, cfg.loss.mu, 10, 20))
        epsilon = cfg.epsilon if cfg.epsilon is not None else EPSILON
        meta["epsilon"] = _fmt(epsilon)
        meta["min_budget"] = str(min_budget(theory_params(cfg, cfg.tracker.E), epsilon))
        return meta

    ates = []
    uniform_trace = None
    overlay_trace = None
    for result in results:
        trace = result.traces[0]
        meta[f"empirical_ate.{trace.scheme}"] = _fmt(trace.empirical_ate)
        if result.config.scheme.gamma is None:
            uniform_trace = trace
        else:
            ates.append((result.config.scheme.gamma, trace.empirical_ate))
            if result.config.scheme.gamma == max(FIG3_GAMMAS):
                overlay_trace = trace
    ates.sort()
    meta["ate_non_increasing_in_gamma"] = str(all(b <= a for (_, a), (_, b) in zip(ates, ates[1:])))
    if uniform_trace is not None and overlay_trace is not None:
        t_max = matched_weight_horizon(max(FIG3_GAMMAS), int(uniform_trace.t[-1]))
        meta["overlay.t_max"] = str(t_max)
        meta["overlay.max_ratio"] = _fmt(overlay_ratio(overlay_trace, uniform_trace, 1, t_max))
    return meta
