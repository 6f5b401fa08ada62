"""Command-line entry point: ``smoothot <command> [options]``.

Exit codes: 0 success or passing verdict, 1 failing verdict or numerical
failure, 2 rejected input or unmet precondition.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from src.config.settings import configure_logging, get_settings
from src.core.errors import (
    IndistinguishableMeasuresError,
    InvalidInputError,
    SmoothotError,
)
from src.core.models.measure import DiscreteMeasure, is_all_match
from src.core.models.results import (
    DivergenceMethod,
    FDivergenceKind,
    Metric,
    SweepReport,
    Theorem,
)
from src.core.services.hermite_chaos import chaos_coefficients
from src.core.services.measures import (
    gen_matched_pair,
    matching_order,
    moment_table,
    recenter,
)
from src.core.services.service_factory import get_service_factory
from src.core.services.sweep_harness import default_method
from src.core.storage.base import StorageResult

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2

_DISTANCE_METRICS = ("w1", "wp", "w2sq", "chi2", "kl", "tv", "dual_w1", "moser_w2sq")


def _check_written(result: StorageResult, path: str) -> None:
    if not result.success:
        raise InvalidInputError(result.error_message or f"Cannot write {path}")


def _emit(args: argparse.Namespace, text: str) -> None:
    if args.out:
        storage = get_service_factory().get_storage_backend()
        _check_written(storage.write_text(args.out, text), args.out)
    else:
        sys.stdout.write(text)


def _emit_json(args: argparse.Namespace, payload: Any) -> None:
    _emit(args, json.dumps(payload, indent=2) + "\n")


def _read_pair(args: argparse.Namespace) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    storage = get_service_factory().get_storage_backend()
    mu = storage.read_measure(args.mu, renormalize=args.renormalize)
    nu = storage.read_measure(args.nu, renormalize=args.renormalize)
    if mu.dim != nu.dim:
        raise InvalidInputError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")
    return mu, nu


def cmd_moments(args: argparse.Namespace) -> int:
    storage = get_service_factory().get_storage_backend()
    measure = storage.read_measure(args.measure, renormalize=args.renormalize)
    _emit_json(args, moment_table(measure, args.max_degree).to_dict())
    return EXIT_OK


def cmd_match_order(args: argparse.Namespace) -> int:
    mu, nu = _read_pair(args)
    measures = get_settings().measures
    order = matching_order(
        mu,
        nu,
        measures.moment_cap if args.cap is None else args.cap,
        measures.matching_tol if args.tol is None else args.tol,
    )
    _emit_json(args, {"order": "all_match" if is_all_match(order) else order})
    return EXIT_OK


def cmd_limits(args: argparse.Namespace) -> int:
    mu, nu = _read_pair(args)
    constants = get_service_factory().get_limits_service().limit_constants(
        mu, nu, mc_samples=args.mc_samples, seed=args.seed
    )
    _emit_json(args, constants.to_dict())
    return EXIT_OK


def cmd_distance(args: argparse.Namespace) -> int:
    mu, nu = _read_pair(args)
    service = get_service_factory().get_divergence_service()
    metric = args.metric
    method = (
        DivergenceMethod(args.method)
        if args.method
        else default_method(Metric(metric), mu.dim)
    )

    if metric in ("chi2", "kl", "tv"):
        kind = FDivergenceKind(metric)
        result = service.f_divergence(
            mu, nu, args.t, kind, method, args.budget, args.seed
        )
    elif metric == "w2sq":
        result = service.w2_squared(mu, nu, args.t, method)
    elif metric in ("w1", "wp"):
        if mu.dim != 1:
            raise InvalidInputError(f"{metric} is exact in dimension 1 only")
        result = service.wp_1d(mu, nu, args.t, p=1.0 if metric == "w1" else args.p)
    elif metric == "dual_w1":
        result = service.w1_dual_lower_bound(mu, nu, args.t)
    else:
        result = service.moser_w2_upper_bound(mu, nu, args.t)
    _emit_json(args, result.to_dict())
    return EXIT_OK


def cmd_moser_bound(args: argparse.Namespace) -> int:
    mu, nu = _read_pair(args)
    service = get_service_factory().get_divergence_service()
    if args.p == 2:
        result = service.moser_w2_upper_bound(mu, nu, args.t, args.max_degree)
    else:
        result = service.moser_wp_upper_bound(
            mu, nu, args.t, args.p, args.max_degree
        )

    if args.dump:
        degree = result.diagnostics["max_degree"]
        mu_c, nu_c = recenter(mu, nu)
        theta = chaos_coefficients(
            mu_c, nu_c, args.t, degree, get_settings().measures.matching_tol
        )
        storage = get_service_factory().get_storage_backend()
        text = json.dumps(theta.to_dict(), indent=2) + "\n"
        _check_written(storage.write_text(args.dump, text), args.dump)
        logger.info(f"Wrote {len(theta.coeffs)} chaos coefficients to {args.dump}")
    _emit_json(args, result.to_dict())
    return EXIT_OK


def _run_sweep(args: argparse.Namespace, metric: Metric) -> SweepReport:
    mu, nu = _read_pair(args)
    return get_service_factory().get_sweep_harness_service().sweep(
        mu,
        nu,
        metric,
        DivergenceMethod(args.method) if args.method else None,
        t_min=args.t_min,
        t_max=args.t_max,
        points=args.points,
        seed=args.seed,
        pair_id=args.pair_id,
        p=args.p,
        budget=args.budget,
    )


def cmd_sweep(args: argparse.Namespace) -> int:
    report = _run_sweep(args, Metric(args.metric))
    storage = get_service_factory().get_storage_backend()
    if args.out:
        _check_written(storage.write_report(report, args.out), args.out)
    else:
        sys.stdout.write(storage.report_csv(report))
    if args.plot_data:
        _check_written(storage.write_two_column(report, args.plot_data), args.plot_data)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    factory = get_service_factory()
    harness = factory.get_sweep_harness_service()
    storage = factory.get_storage_backend()
    theorem = Theorem(args.theorem)
    rtol = get_settings().sweep.default_rtol if args.rtol is None else args.rtol

    if args.report:
        verdict = harness.judge(theorem, storage.read_report(args.report), rtol)
        report = None
    else:
        if not (args.mu and args.nu):
            raise InvalidInputError("verify needs two measure files or --report")
        mu, nu = _read_pair(args)
        verdict, report = harness.verify(
            mu,
            nu,
            theorem,
            rtol=rtol,
            budget=args.budget,
            seed=args.seed,
            p=args.p,
            pair_id=args.pair_id,
        )

    if report is not None and args.save_report:
        _check_written(storage.write_report(report, args.save_report), args.save_report)
    _emit_json(args, verdict.to_dict())
    if verdict.precondition:
        return EXIT_INPUT
    return EXIT_OK if verdict.passed else EXIT_FAIL


def cmd_gen_pair(args: argparse.Namespace) -> int:
    mu, nu = gen_matched_pair(
        args.n, args.dim, args.seed, get_settings().measures.generation_max_retries
    )
    if args.out:
        storage = get_service_factory().get_storage_backend()
        stem = Path(args.out)
        for name, measure in (("mu", mu), ("nu", nu)):
            path = stem.with_name(f"{stem.name}_{name}.json")
            _check_written(storage.write_measure(measure, path), str(path))
    else:
        payload = {"mu": mu.canonical().to_dict(), "nu": nu.canonical().to_dict()}
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def _add_pair(parser: argparse.ArgumentParser, required: bool = True) -> None:
    nargs = None if required else "?"
    parser.add_argument("mu", nargs=nargs, help="First measure (JSON)")
    parser.add_argument("nu", nargs=nargs, help="Second measure (JSON)")


def _add_sweep_grid(parser: argparse.ArgumentParser) -> None:
    sweep = get_settings().sweep
    parser.add_argument(
        "--t-min",
        type=float,
        default=None,
        help=f"Smallest t (default: {sweep.t_min:g})",
    )
    parser.add_argument(
        "--t-max",
        type=float,
        default=None,
        help=f"Largest t (default: {sweep.t_max:g})",
    )
    parser.add_argument(
        "--points",
        type=int,
        default=None,
        help=f"Grid points (default: {sweep.points})",
    )


def _add_solver_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--method",
        choices=[m.value for m in DivergenceMethod],
        default=None,
        help="Solver (default per metric and dimension)",
    )
    parser.add_argument(
        "--p", type=float, default=2.0, help="Exponent for wp (default: 2)"
    )
    parser.add_argument(
        "--budget",
        type=int,
        default=None,
        help="Quadrature subdivisions or Monte Carlo samples",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothot",
        description=(
            "Distances and divergences between Gaussian-smoothed discrete measures"
        ),
    )
    parser.add_argument(
        "--seed", type=int, default=0, help="Base random seed (default: 0)"
    )
    parser.add_argument(
        "--out", default=None, help="Write the result here instead of stdout"
    )
    parser.add_argument(
        "--renormalize",
        action="store_true",
        help="Rescale measure weights that do not sum to 1",
    )
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="Override the configured log level",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    moments = commands.add_parser("moments", help="Moment table of one measure")
    moments.add_argument("measure", help="Measure (JSON)")
    moments.add_argument(
        "--max-degree", type=int, default=4, help="Highest degree (default: 4)"
    )
    moments.set_defaults(handler=cmd_moments)

    match = commands.add_parser(
        "match-order", help="Largest degree through which moments agree"
    )
    _add_pair(match)
    match.add_argument(
        "--cap", type=int, default=None, help="Highest degree checked (default: 12)"
    )
    match.add_argument(
        "--tol", type=float, default=None, help="Relative tolerance (default: 1e-9)"
    )
    match.set_defaults(handler=cmd_match_order)

    limits = commands.add_parser("limits", help="Closed-form large-t limits")
    _add_pair(limits)
    limits.add_argument(
        "--mc-samples",
        type=int,
        default=None,
        help="Draws for the TV constant (default: 1e6)",
    )
    limits.set_defaults(handler=cmd_limits)

    distance = commands.add_parser(
        "distance", help="One distance or divergence at bandwidth t"
    )
    _add_pair(distance)
    distance.add_argument(
        "--t", type=float, required=True, help="Bandwidth (variance of the kernel)"
    )
    distance.add_argument(
        "--metric",
        choices=_DISTANCE_METRICS,
        default="w2sq",
        help="Quantity (default: w2sq)",
    )
    _add_solver_options(distance)
    distance.set_defaults(handler=cmd_distance)

    moser = commands.add_parser("moser-bound", help="Chaos upper bound on W_p^p")
    _add_pair(moser)
    moser.add_argument("--t", type=float, required=True, help="Bandwidth")
    moser.add_argument("--p", type=float, default=2.0, help="Exponent (default: 2)")
    moser.add_argument(
        "--max-degree", type=int, default=None, help="Chaos truncation (default: n + 5)"
    )
    moser.add_argument(
        "--dump", default=None, help="Write the chaos coefficients of Theta_t as JSON"
    )
    moser.set_defaults(handler=cmd_moser_bound)

    sweep = commands.add_parser(
        "sweep", help="Evaluate a metric over a geometric t grid"
    )
    _add_pair(sweep)
    sweep.add_argument(
        "--metric",
        choices=[m.value for m in Metric],
        default="w2sq",
        help="Quantity (default: w2sq)",
    )
    _add_solver_options(sweep)
    _add_sweep_grid(sweep)
    sweep.add_argument(
        "--pair-id", default="pair", help="Label stored in the report (default: pair)"
    )
    sweep.add_argument(
        "--plot-data",
        default=None,
        help="Write log10 t, log10 rescaled value columns here",
    )
    sweep.set_defaults(handler=cmd_sweep)

    verify = commands.add_parser("verify", help="Check one asymptotic claim")
    _add_pair(verify, required=False)
    verify.add_argument(
        "--theorem",
        choices=[t.value for t in Theorem],
        required=True,
        help="Claim to check",
    )
    verify.add_argument(
        "--rtol", type=float, default=None, help="Relative tolerance (default: 0.05)"
    )
    verify.add_argument(
        "--budget",
        type=int,
        default=None,
        help="Quadrature subdivisions or Monte Carlo samples",
    )
    verify.add_argument(
        "--p", type=float, default=2.0, help="Exponent for wp_rate (default: 2)"
    )
    verify.add_argument(
        "--pair-id", default="pair", help="Label stored in the report (default: pair)"
    )
    verify.add_argument(
        "--report", default=None, help="Judge a saved report instead of sweeping"
    )
    verify.add_argument(
        "--save-report", default=None, help="Write the canonical sweep report here"
    )
    verify.set_defaults(handler=cmd_verify)

    gen = commands.add_parser(
        "gen-pair", help="Random pair with a prescribed matching order"
    )
    gen.add_argument("--n", type=int, required=True, help="Matching order")
    gen.add_argument("--dim", type=int, default=1, help="Dimension (default: 1)")
    gen.set_defaults(handler=cmd_gen_pair)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    if args.log_level:
        settings.logging.log_level = args.log_level
    configure_logging(settings)

    try:
        return args.handler(args)
    except (InvalidInputError, IndistinguishableMeasuresError) as e:
        logger.error(f"{args.command}: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT
    except SmoothotError as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
