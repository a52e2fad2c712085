"""CLI subcommands: metric-info, curvature, transport, loop, algebra, closure, verify."""

import argparse
import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import ValidationError

from holonomy_lab.cli.reporting import (
    check,
    output_stem,
    report_json,
    write_csv,
    write_report,
)
from holonomy_lab.core.config import settings
from holonomy_lab.core.exceptions import HypothesisError, LabError, SpecParseError
from holonomy_lab.models.reports import Check, DerivativeRequest, Report, RunConfig
from holonomy_lab.services.circle_algebra import (
    CurvatureField,
    berwald_derivative_field,
    check_conditions,
    curvature_algebra_rank,
    curvature_field,
    curvature_trace_identity,
    second_berwald_fields,
    verify_theorem,
)
from holonomy_lab.services.circle_fields import (
    CircleVectorField,
    bracket_closure,
    five_generators,
    lie_bracket,
)
from holonomy_lab.services.circle_maps import (
    CircleMap,
    circle_grid,
    circle_map_compose,
    circle_map_distance,
    conjugate_flow_check,
    exp_flow,
)
from holonomy_lab.services.deriv_engine import fd_residual
from holonomy_lab.services.finsler_metrics import (
    BryantShenMetric,
    FinslerMetric,
    parse_metric,
    projective_factor_from_norm,
)
from holonomy_lab.services.spray_geometry import (
    flag_curvature_extract,
    fundamental_tensor,
    homogeneity_residuals,
    projective_identity_residual,
    spray_generic,
    spray_projective,
)
from holonomy_lab.services.transport import (
    HOLONOMY_ORIENTATION_SIGN,
    SMALL_LOOP_SIDES,
    LineSegment,
    circle_loop,
    geodesic,
    hair_power,
    loop_holonomy,
    parallel_transport,
    parse_loop,
    polyline_loop,
    small_loop_field,
    transport_along,
)

logger = logging.getLogger(__name__)

SMALL_LOOP_TOL = 1e-3
NONCONSTANT_FRACTION = 0.01
FD_TOL = 1e-5
SAMPLE_RADIUS = 0.8


@dataclass
class CommandResult:
    """A report plus the CSV series to write next to it."""

    report: Report
    series: dict[str, tuple[list[str], Any]] = field(default_factory=dict)


def _pair(value: str) -> tuple[float, float]:
    try:
        first, second = (float(v) for v in value.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"expected two comma-separated numbers, got {value!r}"
        ) from e
    return first, second


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--metric", type=str, default=None, help="funk:+, funk:-, bryant:<alpha> or euclid"
    )
    common.add_argument("--at", type=_pair, default=None, help="Base point x1,x2")
    common.add_argument("--dir", type=_pair, default=None, help="Fiber vector y1,y2")
    common.add_argument("--grid", type=int, default=None, help="Circle grid size (power of two)")
    common.add_argument("--nmax", type=int, default=None, help="Fourier truncation order")
    common.add_argument("--tol-ode", type=float, default=None)
    common.add_argument("--tol-check", type=float, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--json", action="store_true", help="Print the report as JSON")
    common.add_argument("--log-level", type=str, default=None)
    return common


def register_commands(sub: argparse._SubParsersAction) -> None:
    """Register laboratory subcommands on an existing subparsers group."""
    common = _common_arguments()
    sub.add_parser("metric-info", parents=[common], help="Evaluate F, P and g at a point")

    curvature_cmd = sub.add_parser(
        "curvature", parents=[common], help="Flag curvature at random points"
    )
    curvature_cmd.add_argument("--samples", type=int, default=20)

    transport_cmd = sub.add_parser(
        "transport", parents=[common], help="Parallel transport along a curve"
    )
    transport_cmd.add_argument("--curve", type=str, default="polyline:0,0;0.3,0;0.3,0.3")
    transport_cmd.add_argument(
        "--geodesic", type=float, default=None, help="Also integrate a geodesic for this time"
    )

    loop_cmd = sub.add_parser("loop", parents=[common], help="Holonomy of a closed loop")
    loop_cmd.add_argument("--loop", type=str, default="square:0,0,0.2")
    loop_cmd.add_argument(
        "--no-extrapolate", action="store_true", help="Skip the small-loop limit"
    )

    algebra_cmd = sub.add_parser(
        "algebra", parents=[common], help="Curvature fields, brackets and flows"
    )
    algebra_cmd.add_argument("--flow-time", type=float, default=1.0)
    algebra_cmd.add_argument("--pairs", type=int, default=100)

    closure_cmd = sub.add_parser(
        "closure", parents=[common], help="Bracket closure of the Fourier generators"
    )
    closure_cmd.add_argument("--max-depth", type=int, default=8)

    sub.add_parser("verify", parents=[common], help="Run the full verification suite")


def run_config(args: argparse.Namespace) -> RunConfig:
    """Assemble the run configuration from flags; unset flags keep the settings defaults."""
    values = {
        "metric": args.metric,
        "at": args.at,
        "direction": args.dir,
        "grid": args.grid,
        "nmax": args.nmax,
        "tol_ode": args.tol_ode,
        "tol_check": args.tol_check,
        "seed": args.seed,
        "out": args.out,
        "samples": getattr(args, "samples", None),
    }
    try:
        return RunConfig(**{k: v for k, v in values.items() if v is not None})
    except ValidationError as e:
        raise SpecParseError(f"Invalid configuration: {e}") from e


def _report(command: str, config: RunConfig) -> Report:
    return Report(command=command, config=config.model_dump(mode="json"))


def _sample_disk(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    theta = rng.uniform(0.0, 2 * math.pi, count)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _unit_directions(rng: np.random.Generator, count: int) -> np.ndarray:
    theta = rng.uniform(0.0, 2 * math.pi, count)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _random_field(
    rng: np.random.Generator, degree: int, nmax: int, scale: float = 1.0
) -> CircleVectorField:
    coeffs = scale * rng.uniform(-1.0, 1.0, 2 * degree + 1)
    cos = np.zeros(nmax)
    sin = np.zeros(nmax)
    cos[:degree] = coeffs[1 : degree + 1]
    sin[:degree] = coeffs[degree + 1 :]
    return CircleVectorField(coeffs[0], cos, sin)


def sin_flow_closed_form(theta0: np.ndarray, s: float) -> np.ndarray:
    """Time-s flow of sin(t) d/dt: tan(theta/2) = e^s tan(theta0/2), as a lift."""
    turns = np.round(theta0 / (2 * math.pi))
    base = theta0 - 2 * math.pi * turns
    return 2 * np.arctan(math.exp(s) * np.tan(base / 2)) + 2 * math.pi * turns


# -- commands -------------------------------------------------------------------


def cmd_metric_info(config: RunConfig, args: argparse.Namespace) -> CommandResult:
    metric = parse_metric(config.metric)
    report = _report("metric-info", config)
    x, y = config.at, config.direction
    F = float(metric.norm(x, y))
    P = float(metric.projective_factor(x, y))
    g = fundamental_tensor(metric, x, y).g
    report.results = {
        "metric": metric.label,
        "F": F,
        "P": P,
        "g": g.tolist(),
        "curvature": metric.curvature,
    }
    smallest = float(np.linalg.eigvalsh(g).min())
    report.checks.append(check("g_positive_definite", smallest, passed=smallest > 0))
    P_norm = float(projective_factor_from_norm(metric, x, y))
    report.results["P_from_norm"] = P_norm
    report.checks.append(check("projective_factor_consistency", abs(P - P_norm), config.tol_check))
    if isinstance(metric, BryantShenMetric):
        report.results["notes"] = ["spray residuals need base-point derivatives; skipped"]
    else:
        residuals = homogeneity_residuals(metric, x, y)
        report.results["homogeneity"] = residuals
        for name, value in residuals.items():
            report.checks.append(check(f"homogeneity_{name}", value, config.tol_check))
    return CommandResult(report)


def _curvature_suite(
    metric: FinslerMetric, config: RunConfig, count: int
) -> tuple[dict[str, Any], list[Check]]:
    rng = np.random.default_rng(config.seed)
    points = _sample_disk(rng, count, SAMPLE_RADIUS)
    directions = _unit_directions(rng, count)
    lambdas, residuals, identities, errors = [], [], [], []
    for x, y in zip(points, directions):
        try:
            lam, residual = flag_curvature_extract(metric, tuple(x), tuple(y))
            lambdas.append(lam)
            residuals.append(residual)
            identities.append(projective_identity_residual(metric, tuple(x), tuple(y)))
        except LabError as e:
            errors.append(f"x={tuple(x)}: {e.detail}")
    results: dict[str, Any] = {"lambdas": lambdas, "errors": errors}
    checks = [check("point_errors", float(len(errors)), 0.0)]
    if lambdas:
        expected = metric.curvature if metric.curvature is not None else float(np.mean(lambdas))
        deviation = float(np.max(np.abs(np.array(lambdas) - expected)))
        results.update(
            lambda_mean=float(np.mean(lambdas)),
            lambda_std=float(np.std(lambdas)),
            max_fit_residual=float(np.max(residuals)),
            max_identity_residual=float(np.max(identities)),
        )
        checks += [
            check("lambda_deviation", deviation, config.tol_check),
            check("fit_residual", float(np.max(residuals)), config.tol_check),
            check("projective_identity", float(np.max(identities)), config.tol_check),
        ]
        x, y = tuple(points[0]), tuple(directions[0])
        generic, _ = flag_curvature_extract(metric, x, y, path="generic")
        results["generic_lambda_first_point"] = generic
        checks.append(check("generic_vs_projective", abs(generic - lambdas[0]), config.tol_check))
    return results, checks


def cmd_curvature(config: RunConfig, args: argparse.Namespace) -> CommandResult:
    metric = parse_metric(config.metric)
    report = _report("curvature", config)
    results, checks = _curvature_suite(metric, config, config.samples)
    report.results = {"metric": metric.label, **results}
    report.checks.extend(checks)
    return CommandResult(report)


def cmd_transport(config: RunConfig, args: argparse.Namespace) -> CommandResult:
    metric = parse_metric(config.metric)
    report = _report("transport", config)
    curve = parse_loop(args.curve, closed=False)
    solver = config.solver
    result = transport_along(metric, curve, config.direction, solver)
    report.results = {
        "metric": metric.label,
        "curve": args.curve,
        "y0": list(config.direction),
        "vector": result.vector.tolist(),
        "norm_drift": result.norm_drift,
        "stats": result.stats.model_dump(),
        "flagged": result.flagged,
    }
    report.checks.append(check("norm_drift", result.norm_drift, solver.drift_tolerance))
    series: dict[str, tuple[list[str], Any]] = {"-curve": (["t", "x1", "x2"], curve.sample())}
    if args.geodesic is not None:
        path = geodesic(metric, config.at, config.direction, args.geodesic, solver)
        report.results["geodesic"] = {
            "chord_deviation": path.chord_deviation(),
            "speed_drift": path.speed_drift(metric),
            "stats": path.stats.model_dump(),
        }
        report.checks.append(
            check("geodesic_chord_deviation", path.chord_deviation(), settings.tol_flow)
        )
        series["-geodesic"] = (["t", "x1", "x2"], np.column_stack([path.times, path.positions]))
    return CommandResult(report, series)


def _small_loop_checks(
    metric: FinslerMetric, corner: tuple[float, float], side: float, config: RunConfig
) -> tuple[dict[str, Any], list[Check]]:
    sides = tuple(side * ratio for ratio in (1.0, 0.5, 0.25, 0.125))
    result = small_loop_field(metric, corner, sides, config.grid, config.nmax, config.solver)
    results: dict[str, Any] = {
        "field": result.field.to_payload().model_dump(),
        "sides": result.sides,
        "convergence_order": result.convergence_order,
        "nonconstant_fraction": result.nonconstant_fraction(),
        "orientation_sign": HOLONOMY_ORIENTATION_SIGN,
    }
    reference = curvature_field(metric, corner, size=config.grid, nmax=config.nmax)
    results["curvature_field"] = reference.to_payload().model_dump()
    distance = result.field.distance(reference)
    checks = [check("small_loop_vs_curvature_field", distance, SMALL_LOOP_TOL)]
    return results, checks


def cmd_loop(config: RunConfig, args: argparse.Namespace) -> CommandResult:
    metric = parse_metric(config.metric)
    report = _report("loop", config)
    loop = parse_loop(args.loop)
    holonomy = loop_holonomy(metric, loop, config.grid, config.solver)
    displacement = holonomy.displacement()
    report.results = {
        "metric": metric.label,
        "loop": args.loop,
        "base_point": list(loop.base_point),
        "orientation": loop.orientation,
        "signed_area": loop.signed_area(),
        "displacement": {
            "min": float(np.min(displacement)),
            "max": float(np.max(displacement)),
            "mean": float(np.mean(displacement)),
        },
    }
    report.checks.append(check("holonomy_monotone", None, passed=holonomy.is_monotone()))
    series: dict[str, tuple[list[str], Any]] = {
        "": (["t", "displacement"], np.column_stack([holonomy.grid, displacement])),
        "-curve": (["t", "x1", "x2"], loop.sample()),
    }
    kind, _, body = args.loop.partition(":")
    if kind.strip().lower() == "square" and not args.no_extrapolate:
        cx, cy, side = (float(v) for v in body.split(","))
        results, checks = _small_loop_checks(metric, (cx, cy), side, config)
        report.results["small_loop"] = results
        report.checks.extend(checks)
    return CommandResult(report, series)


def _bracket_suite(
    rng: np.random.Generator, pairs: int, nmax: int
) -> tuple[dict[str, Any], list[Check]]:
    tol = settings.tol_algebra
    antisymmetry = 0.0
    for _ in range(pairs):
        f = _random_field(rng, 4, nmax)
        g = _random_field(rng, 4, nmax)
        antisymmetry = max(antisymmetry, (lie_bracket(f, g) + lie_bracket(g, f)).sup_norm())
    jacobi_nmax = max(12, nmax)
    f, g, h = (_random_field(rng, 4, jacobi_nmax, scale=0.5) for _ in range(3))
    jacobi = (
        lie_bracket(f, lie_bracket(g, h))
        + lie_bracket(g, lie_bracket(h, f))
        + lie_bracket(h, lie_bracket(f, g))
    ).sup_norm()
    results = {"antisymmetry": antisymmetry, "jacobi": jacobi}
    checks = [
        check("bracket_antisymmetry", antisymmetry, tol),
        check("jacobi_identity", jacobi, tol),
    ]
    return results, checks


def _flow_suite(
    rng: np.random.Generator, s: float, config: RunConfig
) -> tuple[dict[str, Any], list[Check]]:
    tol = settings.tol_flow
    size = config.grid
    solver = config.solver.model_copy(update={"rtol": 1e-12, "atol": 1e-12})
    f = _random_field(rng, 3, config.nmax, scale=0.3)
    full = exp_flow(f, s, size, solver)
    halves = circle_map_compose(exp_flow(f, s / 2, size, solver), exp_flow(f, s / 2, size, solver))
    group = circle_map_distance(full, halves)
    inverse = circle_map_distance(
        circle_map_compose(full, exp_flow(f, -s, size, solver)), CircleMap.identity(size)
    )
    sine = exp_flow(CircleVectorField.sin_mode(1, config.nmax), 1.0, size, solver)
    closed = CircleMap(sin_flow_closed_form(circle_grid(size), 1.0))
    sine_error = float(np.max(np.abs(sine.lift - closed.lift)))
    h = exp_flow(_random_field(rng, 2, config.nmax, scale=0.3), 0.5, size, solver)
    conjugation = conjugate_flow_check(h, f, s, solver)
    results = {
        "one_parameter_group": group,
        "inverse": inverse,
        "sin_closed_form": sine_error,
        "conjugation": conjugation,
    }
    checks = [
        check("flow_group_property", group, tol),
        check("flow_inverse", inverse, tol),
        check("sin_flow_closed_form", sine_error, tol),
        check("conjugation_invariance", conjugation, settings.tol_pipeline),
    ]
    return results, checks


def cmd_algebra(config: RunConfig, args: argparse.Namespace) -> CommandResult:
    metric = parse_metric(config.metric)
    report = _report("algebra", config)
    x0 = config.at
    rng = np.random.default_rng(config.seed)
    results: dict[str, Any] = {"metric": metric.label, "base_point": list(x0)}
    notes: list[str] = []
    try:
        xi = curvature_field(metric, x0, size=config.grid, nmax=config.nmax)
        fields = {
            "xi": xi,
            "nabla1_xi": berwald_derivative_field(
                metric, CurvatureField(), 0, x0, config.grid, config.nmax
            ),
            "nabla2_xi": berwald_derivative_field(
                metric, CurvatureField(), 1, x0, config.grid, config.nmax
            ),
        }
        try:
            fields.update(second_berwald_fields(metric, x0, "iterated", config.grid, config.nmax))
        except HypothesisError as e:
            notes.append(f"second derivatives skipped: {e.detail}")
        results["fields"] = {name: f.to_payload().model_dump() for name, f in fields.items()}
        trace = curvature_trace_identity(metric, x0, config.grid)
        rank = curvature_algebra_rank(metric, x0, config.grid, config.nmax)
        results.update(trace_identity_residual=trace, curvature_rank=rank)
        report.checks.append(check("curvature_trace_identity", trace, config.tol_check))
        report.checks.append(check("curvature_rank_at_most_one", float(rank), 1.0))
    except LabError as e:
        notes.append(f"curvature fields unavailable: {e.detail}")
    bracket_results, bracket_checks = _bracket_suite(rng, args.pairs, config.nmax)
    flow_results, flow_checks = _flow_suite(rng, args.flow_time, config)
    results.update(brackets=bracket_results, flows=flow_results, notes=notes)
    report.results = results
    report.checks.extend(bracket_checks + flow_checks)
    return CommandResult(report)


def cmd_closure(config: RunConfig, args: argparse.Namespace) -> CommandResult:
    report = _report("closure", config)
    result = bracket_closure(five_generators(config.nmax), config.nmax, args.max_depth)
    expected = 2 * config.nmax + 1
    report.results = {
        "nmax": config.nmax,
        "dimensions": result.dimensions,
        "dimension": result.dimension,
        "converged": result.converged,
    }
    report.checks.append(
        check("full_dimension", float(result.dimension), passed=result.dimension == expected)
    )
    return CommandResult(report)


def _geodesic_suite(
    metric: FinslerMetric, config: RunConfig, count: int = 10
) -> tuple[dict[str, Any], list[Check]]:
    rng = np.random.default_rng(config.seed + 1)
    starts = _sample_disk(rng, count, 0.5)
    directions = _unit_directions(rng, count)
    deviations, parallel_gaps = [], []
    for x, y in zip(starts, directions):
        path = geodesic(metric, tuple(x), tuple(y), 0.3, config.solver)
        deviations.append(path.chord_deviation())
        chord = LineSegment(tuple(path.positions[0]), tuple(path.positions[-1]))
        carried = parallel_transport(metric, chord, tuple(y), config.solver).vector
        parallel_gaps.append(float(np.max(np.abs(carried - path.velocities[-1]))))
    worst = float(np.max(deviations))
    worst_gap = float(np.max(parallel_gaps))
    checks = [
        check("geodesic_chord_deviation", worst, settings.tol_flow),
        check("geodesic_self_parallel", worst_gap, config.tol_check),
    ]
    return {"max_chord_deviation": worst, "max_self_parallel_gap": worst_gap}, checks


def _spray_suite(
    metric: FinslerMetric, config: RunConfig, count: int = 50
) -> tuple[dict[str, Any], list[Check]]:
    """Generic and projective sprays at seeded points, compared relatively."""
    rng = np.random.default_rng(config.seed + 4)
    points = _sample_disk(rng, count, SAMPLE_RADIUS)
    directions = _unit_directions(rng, count)
    worst = 0.0
    for x, y in zip(points, directions):
        generic = spray_generic(metric, tuple(x), tuple(y))
        projective = spray_projective(metric, tuple(x), tuple(y))
        for name in ("G", "G_j", "G_jk"):
            a, b = getattr(generic, name), getattr(projective, name)
            gap = np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b))))
            worst = max(worst, float(gap))
    checks = [check("spray_dual_path", worst, config.tol_check)]
    return {"points": count, "max_relative_gap": worst}, checks


def _fd_suite(
    metric: FinslerMetric, config: RunConfig, count: int = 100
) -> tuple[dict[str, Any], list[Check]]:
    """Tower partials of F up to order 2 against finite differences."""
    rng = np.random.default_rng(config.seed + 5)
    points = _sample_disk(rng, count, SAMPLE_RADIUS)
    fibers = _unit_directions(rng, count) * rng.uniform(0.5, 2.0, (count, 1))

    def norm(x1: Any, x2: Any, y1: Any, y2: Any) -> Any:
        return metric.norm((x1, x2), (y1, y2))

    request = DerivativeRequest(order=2)
    worst = max(
        fd_residual(norm, [*x, *y], request, norm_like=True) for x, y in zip(points, fibers)
    )
    checks = [check("fd_check_agreement", worst, FD_TOL)]
    return {"points": count, "max_relative_gap": worst}, checks


def _transport_suite(
    metric: FinslerMetric, config: RunConfig, count: int = 10
) -> tuple[dict[str, Any], list[Check]]:
    rng = np.random.default_rng(config.seed + 2)
    drifts = []
    for index in range(count):
        if index % 2:
            cx, cy = _sample_disk(rng, 1, 0.4)[0]
            curve = circle_loop(cx, cy, rng.uniform(0.05, 0.3))
        else:
            curve = polyline_loop([tuple(p) for p in _sample_disk(rng, 3, 0.7)])
        y0 = _unit_directions(rng, 1)[0]
        drifts.append(transport_along(metric, curve, y0, config.solver).norm_drift)
    worst = float(np.max(drifts))
    checks = [check("transport_norm_drift", worst, settings.tol_transport_drift)]
    return {"max_norm_drift": worst}, checks


def cmd_verify(config: RunConfig, args: argparse.Namespace) -> CommandResult:
    metric = parse_metric(config.metric)
    report = _report("verify", config)
    x0 = config.at
    algebra = verify_theorem(metric, x0, config.grid, config.nmax, config.tol_check)
    results: dict[str, Any] = {
        "algebra": algebra.model_dump(mode="json", by_alias=True),
        "tolerances": settings.tolerance_ladder,
    }
    report.checks.append(check("hypotheses_met", None, passed=algebra.hypotheses_met))
    for entry in algebra.entries:
        if not entry.informational:
            report.checks.append(check(entry.name, entry.sup_error, config.tol_check))
    if algebra.spanning_residual is not None:
        report.checks.append(
            check("generator_spanning", algebra.spanning_residual, config.tol_check)
        )

    dimensions = {}
    for nmax in (3, 5, 8):
        closure = bracket_closure(five_generators(nmax), nmax, 8)
        dimensions[str(nmax)] = closure.dimension
        full = closure.dimension == 2 * nmax + 1
        report.checks.append(
            check(f"closure_dimension_{nmax}", float(closure.dimension), passed=full)
        )
    results["closure_dimensions"] = dimensions

    rng = np.random.default_rng(config.seed + 3)
    for name, suite in (
        ("brackets", lambda: _bracket_suite(rng, 100, config.nmax)),
        ("flows", lambda: _flow_suite(rng, 1.0, config)),
    ):
        suite_results, suite_checks = suite()
        results[name] = suite_results
        report.checks.extend(suite_checks)

    if isinstance(metric, BryantShenMetric):
        results["notes"] = ["Bryant-Shen data is known at the origin only; path suites skipped"]
    else:
        for name, suite in (
            ("curvature", lambda: _curvature_suite(metric, config, 20)),
            ("geodesics", lambda: _geodesic_suite(metric, config)),
            ("transport", lambda: _transport_suite(metric, config)),
            ("sprays", lambda: _spray_suite(metric, config)),
            ("finite_differences", lambda: _fd_suite(metric, config)),
        ):
            suite_results, suite_checks = suite()
            results[name] = suite_results
            report.checks.extend(suite_checks)
        if check_conditions(metric, x0).met:
            loop_results, loop_checks = _small_loop_verify(metric, x0, algebra.curvature, config)
            results["small_loop"] = loop_results
            report.checks.extend(loop_checks)
    report.results = results
    return CommandResult(report)


def _small_loop_verify(
    metric: FinslerMetric, x0: tuple[float, float], lam: float | None, config: RunConfig
) -> tuple[dict[str, Any], list[Check]]:
    result = small_loop_field(
        metric, x0, SMALL_LOOP_SIDES, config.grid, config.nmax, config.solver
    )
    lam = lam if lam is not None else float(metric.curvature or 0.0)
    measured_sign = int(np.sign(result.field.a0 * lam)) if lam else 0
    results: dict[str, Any] = {
        "field": result.field.to_payload().model_dump(),
        "convergence_order": result.convergence_order,
        "nonconstant_fraction": result.nonconstant_fraction(),
        "measured_orientation_sign": measured_sign,
    }
    checks = [
        check("small_loop_constant", result.nonconstant_fraction(), NONCONSTANT_FRACTION),
        check("small_loop_value", abs(result.field.a0 - lam), SMALL_LOOP_TOL),
        check(
            "orientation_sign",
            float(measured_sign),
            passed=measured_sign == HOLONOMY_ORIENTATION_SIGN,
        ),
    ]
    # informational: n-fold small-loop holonomy approaching the flow of xi
    t = 0.04
    flow = exp_flow(CircleVectorField.constant(lam, config.nmax), t, config.grid, config.solver)
    hair = {
        str(n): circle_map_distance(hair_power(metric, x0, t, n, config.grid, config.solver), flow)
        for n in (1, 4)
    }
    results["hair_distance"] = hair
    return results, checks


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], CommandResult]] = {
    "metric-info": cmd_metric_info,
    "curvature": cmd_curvature,
    "transport": cmd_transport,
    "loop": cmd_loop,
    "algebra": cmd_algebra,
    "closure": cmd_closure,
    "verify": cmd_verify,
}


def _print_summary(report: Report) -> None:
    for item in report.checks:
        status = "PASS" if item.passed else "FAIL"
        value = "" if item.value is None else f" value={item.value:.3e}"
        tolerance = "" if item.tolerance is None else f" tol={item.tolerance:.1e}"
        print(f"{status} {item.name}{value}{tolerance}")
    summary = report.summary()
    print(
        f"{report.command}: {summary['passed']} passed, {summary['failed']} failed "
        f"in {report.duration_seconds:.2f}s"
    )


def handle(args: argparse.Namespace) -> int | None:
    """Handle a laboratory subcommand. Returns exit code, or None if not ours."""
    command = COMMANDS.get(args.command)
    if command is None:
        return None
    config = run_config(args)
    started = time.perf_counter()
    result = command(config, args)
    report = result.report
    report.duration_seconds = time.perf_counter() - started
    if config.out:
        stem = output_stem(config.out, report.command)
        write_report(report, stem)
        for suffix, (columns, rows) in result.series.items():
            write_csv(stem, columns, rows, suffix)
    if args.json:
        print(report_json(report))
    else:
        _print_summary(report)
    return 0 if report.passed else 1
