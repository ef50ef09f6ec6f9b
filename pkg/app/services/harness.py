"""
Monte-Carlo experiment engine.

Runs seeded tracker simulations for every budget in the sweep, aggregates
RMS and worst-case tracking error across runs, attaches the theory envelope
and checks every run against it. Runs are split into chunks executed in
worker threads; each run depends only on its own seed, so the output does
not depend on the thread count.
"""

import asyncio
import math
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sqlalchemy.orm import Session

from app.config import settings
from app.configfile import dump_config
from app.errors import DomainError, ExperimentTimeoutError, HorizonMismatchError
from app.logger import get_logger
from app.models import EnvelopeKind, ExperimentConfig, ExperimentRecord, TheoryParams
from app.services.objective import ObjectiveBank
from app.services.streamgen import walk_batch
from app.services.theory import BoundEnvelope, alpha, te_envelope, te_recursive_bound
from app.services.tracker import gd_steps
from app.services.weights import WeightScheme

logger = get_logger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
CSV_COLUMNS = ["t", "rms_te", "max_te", "bound", "valid_from_flag"]
SEED_MODULUS = 2**64
# runs simulated together in one vectorised chunk
CHUNK_RUNS = 125


@dataclass(frozen=True)
class RunBatch:
    """Unthinned per-run data for one budget: arrays of shape (R, T) and (R,)."""
    seeds: np.ndarray
    te: np.ndarray
    drift: np.ndarray
    init_gap: np.ndarray
    minimizer_sq_norm: np.ndarray

    @property
    def runs(self) -> int:
        return int(self.te.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.te.shape[1])


@dataclass(frozen=True)
class BoundReport:
    violations: int
    runs_checked: int
    valid_from: int
    worst_run: Optional[int] = None
    worst_t: Optional[int] = None
    worst_ratio: float = 0.0

    @property
    def clean(self) -> bool:
        return self.violations == 0


@dataclass(frozen=True)
class AggregateTrace:
    """
    One series of an experiment (a scheme at one budget E), on the recorded grid.

    `bound` is the envelope of the run with the largest initial gap, which
    dominates every other run's envelope pointwise.
    """
    scheme: str
    E: int
    t: np.ndarray
    rms_te: np.ndarray
    max_te: np.ndarray
    bound: np.ndarray
    valid_from_flag: np.ndarray
    empirical_ate: float
    report: BoundReport
    runs: Optional[RunBatch] = field(default=None, repr=False)

    @property
    def final_rms_te(self) -> float:
        return float(self.rms_te[-1])

    @property
    def final_max_te(self) -> float:
        return float(self.max_te[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t,
            "rms_te": self.rms_te,
            "max_te": self.max_te,
            "bound": self.bound,
            "valid_from_flag": self.valid_from_flag.astype(int),
        }, columns=CSV_COLUMNS)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    experiment_id: str
    traces: List[AggregateTrace]
    metadata: Dict[str, str] = field(default_factory=dict)
    paths: List[Path] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(trace.report.violations for trace in self.traces)

    def trace(self, E: int) -> AggregateTrace:
        for candidate in self.traces:
            if candidate.E == E:
                return candidate
        raise KeyError(f"no series with E={E}")


def run_seeds(cfg: ExperimentConfig) -> np.ndarray:
    """Seed of run r is base + r (mod 2^64)."""
    return np.array([(cfg.walk.seed + r) % SEED_MODULUS for r in range(cfg.num_runs)], dtype=object)


def simulate_runs(
    cfg: ExperimentConfig,
    scheme: WeightScheme,
    E: int,
    seeds: Sequence[int],
    stop: Optional[threading.Event] = None,
) -> RunBatch:
    """
    Track len(seeds) streams in lock-step with E updates per time step.

    `stop` is polled once per time step; setting it abandons the chunk.
    """
    centers = walk_batch(cfg.walk, cfg.horizon, [int(s) for s in seeds])
    runs, horizon, dim = centers.shape
    curvature = np.array(cfg.curvature(), dtype=np.float64)
    eta = cfg.tracker.eta

    bank = ObjectiveBank(scheme, runs, dim)
    w = np.tile(np.array(cfg.initial_model(), dtype=np.float64), (runs, 1))
    te = np.empty((runs, horizon))
    drift = np.zeros((runs, horizon))
    minimizer_sq_norm = np.zeros(runs)
    init_gap = np.zeros(runs)
    previous = None

    for k in range(horizon):
        if stop is not None and stop.is_set():
            raise ExperimentTimeoutError(f"chunk of {runs} runs stopped at t={k}")
        bank.absorb(centers[:, k, :], curvature)
        current = bank.exact_minimizer()
        if previous is None:
            init_gap = np.linalg.norm(w - current, axis=1)
        else:
            drift[:, k] = np.linalg.norm(current - previous, axis=1)
        w = gd_steps(w, bank.gradient, eta, E)
        te[:, k] = np.linalg.norm(w - current, axis=1)
        minimizer_sq_norm = np.maximum(minimizer_sq_norm, np.sum(current * current, axis=1))
        previous = current

    return RunBatch(
        seeds=np.asarray(seeds, dtype=object),
        te=te,
        drift=drift,
        init_gap=init_gap,
        minimizer_sq_norm=minimizer_sq_norm,
    )


def theory_params(cfg: ExperimentConfig, E: int) -> TheoryParams:
    constants = cfg.constants()
    return TheoryParams(
        mu=constants.mu,
        L=constants.L,
        C=constants.C,
        eta=cfg.tracker.eta,
        E=E,
        gamma=cfg.scheme.gamma,
    )


def empirical_ate(trace, window_fraction: Optional[float] = None) -> float:
    """
    Finite-horizon ATE proxy: max TE over the final window of the horizon.

    `trace` is a TE series of shape (T,) or per-run traces of shape (R, T);
    the max then runs over every run as well.
    """
    fraction = settings.ate_window_fraction if window_fraction is None else window_fraction
    if not 0.0 < fraction <= 1.0:
        raise DomainError(f"window_fraction must lie in (0, 1], got {fraction}")
    series = np.asarray(trace, dtype=float)
    if series.size == 0 or series.shape[-1] == 0:
        raise DomainError("empirical ATE needs a nonempty TE series")
    width = max(1, math.ceil(fraction * series.shape[-1]))
    return float(np.max(series[..., -width:]))


def bound_check(te, envelope: BoundEnvelope) -> BoundReport:
    """
    Count (run, t) pairs with t >= valid_from where TE exceeds the envelope.

    `te` is one trace (T,) or per-run traces (R, T); the envelope holds a
    single row or one row per run.
    """
    te = np.atleast_2d(np.asarray(te, dtype=float))
    values = np.atleast_2d(envelope.values)
    if te.shape[-1] != values.shape[-1]:
        raise HorizonMismatchError(
            f"traces cover {te.shape[-1]} steps, envelope covers {values.shape[-1]}"
        )
    if values.shape[0] not in (1, te.shape[0]):
        raise DomainError(f"envelope has {values.shape[0]} rows for {te.shape[0]} runs")

    start = envelope.valid_from - 1
    runs = te.shape[0]
    if start >= te.shape[-1]:
        return BoundReport(violations=0, runs_checked=runs, valid_from=envelope.valid_from)

    observed = te[:, start:]
    limit = np.broadcast_to(values[:, start:], observed.shape)
    excess = observed > limit * (1.0 + settings.bound_rtol) + settings.bound_atol
    violations = int(np.count_nonzero(excess))
    if violations == 0:
        return BoundReport(violations=0, runs_checked=runs, valid_from=envelope.valid_from)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(limit > 0.0, observed / limit, np.inf)
    ratio = np.where(excess, ratio, -np.inf)
    run, k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return BoundReport(
        violations=violations,
        runs_checked=runs,
        valid_from=envelope.valid_from,
        worst_run=int(run),
        worst_t=int(start + k + 1),
        worst_ratio=float(ratio[run, k]),
    )


def aggregate(
    cfg: ExperimentConfig,
    scheme: WeightScheme,
    E: int,
    batch: RunBatch,
) -> AggregateTrace:
    """Reduce per-run traces to RMS/max series and check each run against its envelope."""
    envelope = te_envelope(theory_params(cfg, E), batch.init_gap, cfg.horizon)
    if cfg.envelope_scale != 1.0:
        envelope = envelope.scaled(cfg.envelope_scale)
    report = bound_check(batch.te, envelope)
    if not report.clean:
        logger.warning("Bound violations found", extra={
            "scheme": scheme.label,
            "E": E,
            "violations": report.violations,
            "worst_run": report.worst_run,
            "worst_t": report.worst_t,
        })

    rms = np.sqrt(np.mean(batch.te ** 2, axis=0))
    worst = np.max(batch.te, axis=0)
    bound = envelope.values[int(np.argmax(batch.init_gap))]
    t = np.arange(1, cfg.horizon + 1)
    keep = np.arange(0, cfg.horizon, cfg.record_every)

    return AggregateTrace(
        scheme=scheme.label,
        E=E,
        t=t[keep],
        rms_te=rms[keep],
        max_te=worst[keep],
        bound=bound[keep],
        valid_from_flag=t[keep] >= envelope.valid_from,
        empirical_ate=empirical_ate(batch.te, cfg.window_fraction),
        report=report,
        runs=batch,
    )


def recursion_check(cfg: ExperimentConfig, trace: AggregateTrace) -> BoundReport:
    """Check every run against the one-step certificate built from its own drifts."""
    if trace.runs is None:
        raise DomainError("recursion check needs the per-run data of the series")
    a = alpha(theory_params(cfg, trace.E))
    values = te_recursive_bound(a, trace.runs.init_gap, trace.runs.drift)
    return bound_check(trace.runs.te, BoundEnvelope(values=values, valid_from=1, kind=EnvelopeKind.RECURSIVE_TE))


def _merge(batches: List[RunBatch]) -> RunBatch:
    return RunBatch(
        seeds=np.concatenate([b.seeds for b in batches]),
        te=np.concatenate([b.te for b in batches]),
        drift=np.concatenate([b.drift for b in batches]),
        init_gap=np.concatenate([b.init_gap for b in batches]),
        minimizer_sq_norm=np.concatenate([b.minimizer_sq_norm for b in batches]),
    )


class ExperimentRunner:
    """
    Orchestrates experiment execution:
    - step-size validation before any run
    - chunked runs on a bounded pool of worker threads
    - wall-clock timeout enforcement
    - result files plus registry rows when a session is attached
    """

    def __init__(
        self,
        db: Optional[Session] = None,
        threads: Optional[int] = None,
        timeout_seconds: Optional[float] = None,
    ):
        self.db = db
        self.threads = max(1, threads or settings.default_threads)
        self.timeout_seconds = timeout_seconds or settings.run_timeout_seconds

    async def run(self, cfg: ExperimentConfig) -> ExperimentResult:
        cfg.check_admissible()
        experiment_id = str(uuid.uuid4())
        scheme = WeightScheme.from_config(cfg.scheme)

        logger.info("Experiment started", extra={
            "experiment_id": experiment_id,
            "experiment": cfg.name,
            "scheme": scheme.label,
            "E_values": cfg.budgets,
            "num_runs": cfg.num_runs,
            "horizon": cfg.horizon,
            "threads": self.threads,
        })

        stop = threading.Event()
        try:
            traces = await asyncio.wait_for(
                self._run_all(cfg, scheme, stop),
                timeout=self.timeout_seconds,
            )
        except asyncio.TimeoutError:
            # worker threads cannot be cancelled; they poll this between time steps
            stop.set()
            logger.warning("Experiment timeout", extra={
                "experiment_id": experiment_id,
                "timeout_seconds": self.timeout_seconds,
            })
            raise ExperimentTimeoutError(
                f"experiment {cfg.name!r} exceeded {self.timeout_seconds:g}s"
            ) from None

        result = ExperimentResult(config=cfg, experiment_id=experiment_id, traces=traces)
        logger.info("Experiment completed", extra={
            "experiment_id": experiment_id,
            "experiment": cfg.name,
            "violations": result.violations,
        })
        return result

    def publish(self, result: ExperimentResult, out_dir: Union[str, Path], plot: bool = True) -> List[Path]:
        """Write result files, then record registry rows when a session is attached."""
        paths = write_results(result, out_dir, plot=plot)
        if self.db is not None:
            record_registry(result, self.db)
        return paths

    async def _run_all(
        self, cfg: ExperimentConfig, scheme: WeightScheme, stop: threading.Event
    ) -> List[AggregateTrace]:
        seeds = run_seeds(cfg)
        chunks = [seeds[i:i + CHUNK_RUNS] for i in range(0, len(seeds), CHUNK_RUNS)]
        semaphore = asyncio.Semaphore(self.threads)
        traces = []
        for E in cfg.budgets:
            async def simulate(chunk, E=E):
                async with semaphore:
                    batch = await asyncio.to_thread(simulate_runs, cfg, scheme, E, chunk, stop)
                logger.debug("Chunk finished", extra={"E": E, "runs": len(chunk)})
                return batch

            batches = await asyncio.gather(*(simulate(chunk) for chunk in chunks))
            traces.append(aggregate(cfg, scheme, E, _merge(list(batches))))
        return traces


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """Synchronous entry point around ExperimentRunner.run."""
    return asyncio.run(ExperimentRunner(threads=threads).run(cfg))


def decay_slope(t, rms, t_min: Optional[float] = None, t_max: Optional[float] = None) -> float:
    """Least-squares slope of log(rms) against log(t); defaults to t in [T/4, T]."""
    t = np.asarray(t, dtype=float)
    rms = np.asarray(rms, dtype=float)
    if t.shape != rms.shape or t.size == 0:
        raise HorizonMismatchError("t and rms must be nonempty and of equal length")
    lo = t[-1] / 4.0 if t_min is None else t_min
    hi = t[-1] if t_max is None else t_max
    mask = (t >= lo) & (t <= hi) & (rms > 0.0)
    if np.count_nonzero(mask) < 2:
        raise DomainError(f"fewer than two positive points with t in [{lo:g}, {hi:g}]")
    slope, _ = np.polyfit(np.log(t[mask]), np.log(rms[mask]), 1)
    return float(slope)


def _late_window(trace: AggregateTrace, fraction: float) -> slice:
    width = max(1, math.ceil(fraction * trace.t.shape[0]))
    return slice(trace.t.shape[0] - width, None)


def budget_ratio(series_low: AggregateTrace, series_high: AggregateTrace, window_fraction: float = 0.2) -> float:
    """Late-horizon RMS TE of the larger budget over that of the smaller one."""
    if not np.array_equal(series_low.t, series_high.t):
        raise HorizonMismatchError("series are recorded on different grids")
    window = _late_window(series_low, window_fraction)
    return float(np.mean(series_high.rms_te[window]) / np.mean(series_low.rms_te[window]))


def ate_ratio(series_low: AggregateTrace, series_high: AggregateTrace) -> float:
    """Empirical ATE of the larger budget over that of the smaller one."""
    if not np.array_equal(series_low.t, series_high.t):
        raise HorizonMismatchError("series are recorded on different grids")
    if series_low.empirical_ate == 0.0:
        return 1.0 if series_high.empirical_ate == 0.0 else math.inf
    return series_high.empirical_ate / series_low.empirical_ate


def overlay_ratio(series_a: AggregateTrace, series_b: AggregateTrace, t_min: int, t_max: int) -> float:
    """Largest factor separating the two RMS traces over t in [t_min, t_max]."""
    if not np.array_equal(series_a.t, series_b.t):
        raise HorizonMismatchError("series are recorded on different grids")
    mask = (series_a.t >= t_min) & (series_a.t <= t_max)
    if not np.any(mask):
        raise DomainError(f"no recorded t in [{t_min}, {t_max}]")
    a, b = series_a.rms_te[mask], series_b.rms_te[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(a / b, b / a)
    ratio = np.where((a == 0.0) & (b == 0.0), 1.0, ratio)
    return float(np.max(ratio))


def series_path(out_dir: Path, cfg: ExperimentConfig, trace: AggregateTrace) -> Path:
    return out_dir / f"{cfg.name}_{trace.scheme}_E{trace.E}.csv"


def manifest_path(out_dir: Path, cfg: ExperimentConfig) -> Path:
    return out_dir / f"{cfg.name}_{WeightScheme.from_config(cfg.scheme).label}.manifest"


_PLOT_TEMPLATE = '''"""Plot {name}: RMS and worst-case tracking error per series."""
import matplotlib.pyplot as plt
import pandas as pd

SERIES = {series!r}

fig, ax = plt.subplots()
for label, path in SERIES:
    frame = pd.read_csv(path)
    ax.plot(frame["t"], frame["rms_te"], label=f"{{label}} RMS")
    ax.plot(frame["t"], frame["max_te"], linestyle="--", label=f"{{label}} max")
ax.set_xlabel("t")
ax.set_ylabel("tracking error")
ax.set_yscale("log")
{xscale}ax.legend()
fig.savefig("{name}.png", dpi=150)
'''


def write_plot_script(out_dir: Path, name: str, csv_paths: Sequence[Path], loglog: bool = False) -> Path:
    series = [(p.stem, p.name) for p in csv_paths]
    script = _PLOT_TEMPLATE.format(
        name=name,
        series=series,
        xscale='ax.set_xscale("log")\n' if loglog else "",
    )
    path = out_dir / f"plot_{name}.py"
    path.write_text(script)
    return path


def write_results(result: ExperimentResult, out_dir: Union[str, Path], plot: bool = True) -> List[Path]:
    """
    Write one CSV per (scheme, E), the run manifest and a plot script.

    The manifest is a loadable config file; re-running it reproduces the
    CSVs byte for byte. Metadata lines are comments.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    csv_paths = []

    for trace in result.traces:
        path = series_path(out, cfg, trace)
        trace.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        csv_paths.append(path)
        logger.info("Series written", extra={"path": str(path), "rows": int(trace.t.shape[0])})

    lines = [dump_config(cfg)]
    for trace in result.traces:
        prefix = f"series.{trace.scheme}.E{trace.E}"
        lines.append(f"# {prefix}.empirical_ate={trace.empirical_ate!r}")
        lines.append(f"# {prefix}.violations={trace.report.violations}")
    for key, value in sorted(result.metadata.items()):
        lines.append(f"# {key}={value}")
    manifest = manifest_path(out, cfg)
    manifest.write_text("\n".join(lines) + "\n")

    written = csv_paths + [manifest]
    if plot:
        written.append(write_plot_script(out, manifest.stem, csv_paths))
    result.paths.extend(written)
    return written


def record_registry(result: ExperimentResult, db: Session) -> List[ExperimentRecord]:
    """Store one ExperimentRecord row per series."""
    cfg = result.config
    by_name = {p.name: str(p) for p in result.paths}
    records = []
    for trace in result.traces:
        record = ExperimentRecord(
            experiment_id=result.experiment_id,
            name=cfg.name,
            scheme=trace.scheme,
            gamma=cfg.scheme.gamma,
            E=trace.E,
            eta=cfg.tracker.eta,
            mu=cfg.loss.mu,
            L=cfg.loss.L,
            horizon=cfg.horizon,
            num_runs=cfg.num_runs,
            base_seed=str(cfg.walk.seed),
            empirical_ate=trace.empirical_ate,
            final_rms_te=trace.final_rms_te,
            final_max_te=trace.final_max_te,
            violations=trace.report.violations,
            csv_path=by_name.get(series_path(Path("."), cfg, trace).name),
        )
        db.add(record)
        records.append(record)
    db.commit()
    logger.info("Registry rows stored", extra={
        "experiment_id": result.experiment_id,
        "rows": len(records),
    })
    return records
