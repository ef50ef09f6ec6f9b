"""
Command-line front end.

    python -m app run --config exp.cfg --set tracker.E=20 --out results
    python -m app bounds --mu 0.1 --L 0.1 --C 100 --eta 2.85 --gamma 0.7 --epsilon 0.1
    python -m app repro fig2 --threads 8
    python -m app check --config exp.cfg

Exit codes: 0 success, 1 internal error, 2 configuration error,
3 bound violation (strict mode, and always for `check`).
"""

import argparse
import asyncio
import math
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.config import settings
from app.configfile import load_config, load_values
from app.database import get_db, init_db
from app.errors import (
    ConfigurationError,
    DomainError,
    ExperimentTimeoutError,
    UnsupportedOperationError,
)
from app.logger import get_logger
from app.models import ExitCode, ExperimentConfig, FigureId, OutputFormat, TheoryParams
from app.services.harness import (
    ExperimentResult,
    ExperimentRunner,
    recursion_check,
    run_seeds,
    write_plot_script,
)
from app.services.objective import equivalence_gap
from app.services.repro import figure_configs, figure_metadata
from app.services.streamgen import stream
from app.services.theory import (
    admissible_eta,
    alpha,
    ate_floor,
    c_prime,
    discounted_sum_constants,
    global_minimizer_bound,
    improvement_factor,
    min_budget,
    uniform_sum_constants,
)
from app.services.weights import WeightScheme

logger = get_logger(__name__)

# gradients compared against direct summation on this many leading samples
SELF_TEST_HORIZON = 200
SELF_TEST_POINTS = 20
SELF_TEST_TOLERANCE = 1e-10

_BOUNDS_FLAGS = {
    "mu": "loss.mu",
    "L": "loss.L",
    "C": "loss.C",
    "eta": "tracker.eta",
    "E": "tracker.E",
    "gamma": "scheme.gamma",
    "epsilon": "theory.epsilon",
}


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value experiment file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable, applied after --config)")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.HUMAN.value)


def _add_execution(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=Path, default=Path(settings.output_dir), help="output directory")
    parser.add_argument("--strict", action="store_true", help="exit 3 when any run breaks its envelope")
    parser.add_argument("--threads", type=_positive_int, default=settings.default_threads)
    parser.add_argument("--seed", type=_u64, help="base seed; run r uses seed + r")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracklab",
        description="Budgeted gradient tracking on weighted streaming objectives",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    _add_common(run)
    _add_execution(run)

    bounds = sub.add_parser("bounds", help="print theory constants and the minimum budget")
    _add_common(bounds)
    bounds.add_argument("--mu", type=float)
    bounds.add_argument("--L", type=float)
    bounds.add_argument("--C", type=float)
    bounds.add_argument("--eta", type=float)
    bounds.add_argument("--E", type=int)
    bounds.add_argument("--gamma", type=float)
    bounds.add_argument("--epsilon", type=float)

    repro = sub.add_parser("repro", help="reproduce a baked figure configuration")
    repro.add_argument("figure", choices=[f.value for f in FigureId])
    _add_common(repro)
    _add_execution(repro)

    check = sub.add_parser("check", help="run an experiment plus self-tests; always strict")
    _add_common(check)
    _add_execution(check)

    return parser


@contextmanager
def _runner(threads: int) -> Iterator[ExperimentRunner]:
    if not settings.record_runs:
        yield ExperimentRunner(threads=threads)
        return
    init_db()
    with contextmanager(get_db)() as db:
        yield ExperimentRunner(db=db, threads=threads)


async def _run_all(runner: ExperimentRunner, configs: Sequence[ExperimentConfig]) -> List[ExperimentResult]:
    return [await runner.run(cfg) for cfg in configs]


def _print_rows(fmt: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    if fmt == OutputFormat.CSV.value:
        print(",".join(header))
        for row in rows:
            print(",".join(str(value) for value in row))
        return
    widths = [max([len(str(h))] + [len(str(r[i])) for r in rows]) for i, h in enumerate(header)]
    print("  ".join(str(h).ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))


def _print_results(fmt: str, results: Sequence[ExperimentResult]) -> None:
    rows = []
    for result in results:
        for trace in result.traces:
            rows.append((
                result.config.name,
                trace.scheme,
                trace.E,
                f"{trace.empirical_ate:.6g}",
                f"{trace.final_rms_te:.6g}",
                f"{trace.final_max_te:.6g}",
                trace.report.violations,
            ))
    _print_rows(fmt, ["name", "scheme", "E", "empirical_ate", "final_rms_te", "final_max_te", "violations"], rows)


def _violation_exit(results: Sequence[ExperimentResult]) -> int:
    for result in results:
        for trace in result.traces:
            if not trace.report.clean:
                print(
                    f"bound violated: {result.config.name} {trace.scheme} E={trace.E}: "
                    f"{trace.report.violations} points, worst run {trace.report.worst_run} "
                    f"at t={trace.report.worst_t} ({trace.report.worst_ratio:.6g}x envelope)",
                    file=sys.stderr,
                )
    return ExitCode.BOUND_VIOLATION if any(r.violations for r in results) else ExitCode.OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed)
    cfg.check_admissible()
    with _runner(args.threads) as runner:
        result = asyncio.run(runner.run(cfg))
        runner.publish(result, args.out)
    _print_results(args.format, [result])
    return _violation_exit([result]) if args.strict else ExitCode.OK


def _bounds_params(args: argparse.Namespace) -> Tuple[TheoryParams, Optional[float]]:
    values = load_values(args.config, args.set)
    for flag, key in _BOUNDS_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            values[key] = str(value)

    if "loss.C" not in values and "walk.c_max" in values:
        dim = int(values.get("walk.dim", "1"))
        values["loss.C"] = repr(float(values["walk.c_max"]) * math.sqrt(dim))
    gamma = values.get("scheme.gamma") or None
    if gamma is not None and values.get("scheme.kind", "discounted") != "discounted":
        raise ConfigurationError(f"scheme: gamma={gamma} is only valid for the discounted scheme", key="scheme")

    fields = {
        "mu": values.get("loss.mu"),
        "L": values.get("loss.L"),
        "C": values.get("loss.C"),
        "eta": values.get("tracker.eta"),
        "E": values.get("tracker.E", "1"),
        "gamma": gamma,
    }
    try:
        params = TheoryParams.model_validate({k: v for k, v in fields.items() if v is not None})
    except ValidationError as e:
        error = e.errors()[0]
        field = str(error["loc"][0]) if error["loc"] else "eta"
        key = _BOUNDS_FLAGS.get(field, "tracker.eta")
        raise ConfigurationError(f"{key}: {error['msg']}", key=key) from e

    epsilon = values.get("theory.epsilon")
    if epsilon is None or epsilon == "":
        return params, None
    try:
        eps = float(epsilon)
    except ValueError:
        raise ConfigurationError(f"theory.epsilon: not a number: {epsilon!r}", key="theory.epsilon")
    if not eps > 0.0:
        raise DomainError(f"theory.epsilon must be > 0, got {eps:g}")
    return params, eps


def bounds_report(params: TheoryParams, epsilon: Optional[float]) -> List[Tuple[str, str]]:
    a = alpha(params)
    rows = [
        ("alpha", repr(a)),
        ("c_prime", repr(c_prime(params.constants))),
        ("admissible_eta", repr(admissible_eta(params.mu, params.L))),
        ("minimizer_sq_norm_bound", repr(global_minimizer_bound(params.constants))),
        ("improvement_factor_2E", repr(improvement_factor(params.eta, params.mu, params.E, 2 * params.E))),
    ]
    if params.gamma is None:
        A, t0 = uniform_sum_constants(a)
        rows += [
            ("scheme", "uniform"),
            ("A", repr(A)),
            ("t0", str(t0)),
            ("ate_floor", "0"),
            ("ate_floor_note", "vanishing under uniform weights"),
        ]
        if epsilon is not None:
            rows.append(("min_budget", "n/a"))
        return rows

    A_gamma, t0 = discounted_sum_constants(a, params.gamma)
    rows += [
        ("scheme", WeightScheme.discounted(params.gamma).label),
        ("A_gamma", repr(A_gamma)),
        ("t0", str(t0)),
        ("ate_floor", repr(ate_floor(params))),
    ]
    if epsilon is not None:
        rows += [("epsilon", repr(epsilon)), ("min_budget", str(min_budget(params, epsilon)))]
    return rows


def cmd_bounds(args: argparse.Namespace) -> int:
    params, epsilon = _bounds_params(args)
    rows = bounds_report(params, epsilon)
    if args.format == OutputFormat.CSV.value:
        _print_rows(args.format, ["key", "value"], rows)
    else:
        width = max(len(key) for key, _ in rows)
        for key, value in rows:
            print(f"{key.ljust(width)} = {value}")
    return ExitCode.OK


def cmd_repro(args: argparse.Namespace) -> int:
    figure = FigureId(args.figure)
    configs = figure_configs(figure, args.set, seed=args.seed)
    for cfg in configs:
        cfg.check_admissible()

    with _runner(args.threads) as runner:
        results = asyncio.run(_run_all(runner, configs))
        metadata = figure_metadata(figure, results)
        csv_paths = []
        for result in results:
            result.metadata.update(metadata)
            csv_paths += [p for p in runner.publish(result, args.out, plot=False) if p.suffix == ".csv"]
    write_plot_script(Path(args.out), figure.value, csv_paths, loglog=figure == FigureId.FIG1)

    _print_results(args.format, results)
    _print_rows(args.format, ["key", "value"], sorted(metadata.items()))
    return _violation_exit(results) if args.strict else ExitCode.OK


def self_test(cfg: ExperimentConfig) -> float:
    """Recursive-vs-direct gradient gap on the first run's stream."""
    seed = int(run_seeds(cfg)[0])
    losses = stream(cfg.walk.with_seed(seed), min(cfg.horizon, SELF_TEST_HORIZON), cfg.curvature(), cfg.constants())
    rng = np.random.default_rng(seed)
    points = rng.uniform(-cfg.walk.c_max, cfg.walk.c_max, size=(SELF_TEST_POINTS, cfg.dim))
    return equivalence_gap(WeightScheme.from_config(cfg.scheme), losses, points)


def cmd_check(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed)
    cfg.check_admissible()
    with _runner(args.threads) as runner:
        result = asyncio.run(runner.run(cfg))
        runner.publish(result, args.out)

    gap = self_test(cfg)
    rows = [("objective_gradient_gap", repr(gap), "ok" if gap <= SELF_TEST_TOLERANCE else "FAIL")]
    failed = gap > SELF_TEST_TOLERANCE
    for trace in result.traces:
        certificate = recursion_check(cfg, trace)
        rows.append((f"envelope.E{trace.E}", str(trace.report.violations), "ok" if trace.report.clean else "FAIL"))
        rows.append((f"recursion.E{trace.E}", str(certificate.violations), "ok" if certificate.clean else "FAIL"))
        failed = failed or not (trace.report.clean and certificate.clean)

    _print_rows(args.format, ["check", "value", "status"], rows)
    if failed:
        logger.warning("Check failed", extra={"experiment": cfg.name})
        return ExitCode.BOUND_VIOLATION
    return ExitCode.OK


_COMMANDS = {
    "run": cmd_run,
    "bounds": cmd_bounds,
    "repro": cmd_repro,
    "check": cmd_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(_COMMANDS[args.command](args))
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return ExitCode.CONFIG_ERROR
    except (DomainError, UnsupportedOperationError) as e:
        print(f"invalid parameters: {e}", file=sys.stderr)
        return ExitCode.CONFIG_ERROR
    except ExperimentTimeoutError as e:
        logger.error("Experiment timeout", extra={"error": str(e)})
        return ExitCode.INTERNAL_ERROR
    except Exception as e:
        logger.exception("Unexpected error", extra={"error": str(e)})
        return ExitCode.INTERNAL_ERROR
