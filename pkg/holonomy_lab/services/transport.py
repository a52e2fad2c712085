"""Geodesics, nonlinear parallel transport and loop holonomy.

Parallel transport of a fiber vector X along a base curve c solves
dX^i/dt = -G^i_j(c, X) dc^j/dt. For the projectively flat metrics in the
catalog the connection is G^i_j = P_j y^i + P delta^i_j, so only a first
order tower of P over the fiber is needed at every right-hand side call.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from holonomy_lab.core.config import settings
from holonomy_lab.core.exceptions import (
    BoundaryExitError,
    ConvergenceError,
    MetricDomainError,
    SpecParseError,
    TransportError,
)
from holonomy_lab.models.reports import DerivativeRequest, SolverSettings, TransportStats
from holonomy_lab.services.circle_fields import CircleVectorField, fourier_decompose
from holonomy_lab.services.circle_maps import CircleMap, circle_grid, circle_map_compose
from holonomy_lab.services.deriv_engine import lift
from holonomy_lab.services.finsler_metrics import FinslerMetric
from holonomy_lab.services.indicatrix import IndicatrixChart
from holonomy_lab.services.ode import integrate

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# The positive square loop (+e1, +e2, -e1, -e2) displaces the indicatrix
# angle by +s^2 xi(t) to leading order, xi = R(d/dx1, d/dx2).
HOLONOMY_ORIENTATION_SIGN = 1

_CLOSURE_TOL = 1e-12
_MIN_LOOP_LENGTH = 1e-12
_COLLAPSE_RATIO = 1e-12
SMALL_LOOP_SIDES = (0.2, 0.1, 0.05, 0.025)
_FIBER_REQUEST = DerivativeRequest(variables=("y1", "y2"), order=1, fiber=("y1", "y2"))


# -- curves -------------------------------------------------------------------


class Segment(ABC):
    """Smooth map [0, 1] -> chart with its velocity."""

    @abstractmethod
    def position(self, t: ArrayLike) -> Array:
        """Points c(t), shape (2, *t.shape)."""

    @abstractmethod
    def velocity(self, t: ArrayLike) -> Array:
        """Velocities dc/dt, shape (2, *t.shape)."""

    @abstractmethod
    def reversed(self) -> Segment:
        """The same segment traversed backwards."""

    @property
    def start(self) -> Array:
        return self.position(0.0)

    @property
    def end(self) -> Array:
        return self.position(1.0)

    def length(self, samples: int = 64) -> float:
        t = (np.arange(samples) + 0.5) / samples
        return float(np.mean(np.hypot(*self.velocity(t))))


@dataclass(frozen=True)
class LineSegment(Segment):
    a: tuple[float, float]
    b: tuple[float, float]

    def position(self, t: ArrayLike) -> Array:
        t = np.asarray(t, dtype=float)
        a, b = np.asarray(self.a), np.asarray(self.b)
        return a.reshape(2, *([1] * t.ndim)) + np.multiply.outer(b - a, t)

    def velocity(self, t: ArrayLike) -> Array:
        t = np.asarray(t, dtype=float)
        delta = np.asarray(self.b) - np.asarray(self.a)
        return np.multiply.outer(delta, np.ones_like(t))

    def reversed(self) -> LineSegment:
        return LineSegment(self.b, self.a)

    def length(self, samples: int = 64) -> float:
        return math.dist(self.a, self.b)


@dataclass(frozen=True)
class ArcSegment(Segment):
    """Circular arc from angle ``theta0`` to ``theta1`` about ``center``."""

    center: tuple[float, float]
    radius: float
    theta0: float
    theta1: float

    def _angle(self, t: Array) -> Array:
        return self.theta0 + (self.theta1 - self.theta0) * t

    def position(self, t: ArrayLike) -> Array:
        theta = self._angle(np.asarray(t, dtype=float))
        return np.stack(
            [
                self.center[0] + self.radius * np.cos(theta),
                self.center[1] + self.radius * np.sin(theta),
            ]
        )

    def velocity(self, t: ArrayLike) -> Array:
        theta = self._angle(np.asarray(t, dtype=float))
        rate = self.radius * (self.theta1 - self.theta0)
        return np.stack([-rate * np.sin(theta), rate * np.cos(theta)])

    def reversed(self) -> ArcSegment:
        return ArcSegment(self.center, self.radius, self.theta1, self.theta0)

    def length(self, samples: int = 64) -> float:
        return abs(self.radius * (self.theta1 - self.theta0))


@dataclass(frozen=True)
class LoopCurve:
    """
    Piecewise-smooth curve made of segments traversed in order.

    Zero-length segments are dropped. When ``closed`` is set the end of the
    last segment must return to the start of the first.
    """

    segments: tuple[Segment, ...]
    closed: bool = True
    start_point: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        kept = tuple(seg for seg in self.segments if seg.length() > 0.0)
        object.__setattr__(self, "segments", kept)
        if self.start_point is None:
            first = kept[0].start if kept else np.zeros(2)
            object.__setattr__(self, "start_point", (float(first[0]), float(first[1])))
        for before, after in zip(kept, kept[1:]):
            if np.max(np.abs(before.end - after.start)) > _CLOSURE_TOL:
                raise ValueError("consecutive segments do not join")
        if self.closed and kept and np.max(np.abs(kept[-1].end - kept[0].start)) > _CLOSURE_TOL:
            raise ValueError("loop is not closed")

    @property
    def base_point(self) -> tuple[float, float]:
        assert self.start_point is not None
        return self.start_point

    @property
    def length(self) -> float:
        return sum(seg.length() for seg in self.segments)

    @property
    def is_degenerate(self) -> bool:
        return self.length < _MIN_LOOP_LENGTH

    @property
    def orientation(self) -> int:
        """+1 for counterclockwise loops, -1 for clockwise, 0 if no area."""
        area = self.signed_area()
        return int(np.sign(area)) if abs(area) > _MIN_LOOP_LENGTH**2 else 0

    def signed_area(self, samples: int = 256) -> float:
        """Shoelace area enclosed by the loop."""
        t = (np.arange(samples) + 0.5) / samples
        total = 0.0
        for seg in self.segments:
            x, y = seg.position(t)
            vx, vy = seg.velocity(t)
            total += 0.5 * float(np.mean(x * vy - y * vx))
        return total

    def reversed(self) -> LoopCurve:
        return LoopCurve(
            tuple(seg.reversed() for seg in reversed(self.segments)),
            closed=self.closed,
            start_point=self.base_point,
        )

    def concatenate(self, other: LoopCurve) -> LoopCurve:
        """This curve followed by ``other``."""
        end = self.segments[-1].end if self.segments else np.asarray(self.base_point)
        if np.max(np.abs(end - np.asarray(other.base_point))) > _CLOSURE_TOL:
            raise ValueError("curves do not join")
        return LoopCurve(
            self.segments + other.segments,
            closed=self.closed and other.closed,
            start_point=self.base_point,
        )

    def sample(self, points_per_segment: int = 50) -> Array:
        """Rows (t, x1, x2) with t the global parameter in [0, len(segments)]."""
        t = np.linspace(0.0, 1.0, points_per_segment)
        rows = []
        for index, seg in enumerate(self.segments):
            x1, x2 = seg.position(t)
            rows.append(np.column_stack([index + t, x1, x2]))
        if not rows:
            return np.array([[0.0, *self.base_point]])
        return np.vstack(rows)


def polyline_loop(points: Sequence[tuple[float, float]], closed: bool = True) -> LoopCurve:
    """Straight segments through ``points``; closed back to the first point if asked."""
    vertices = [(float(p[0]), float(p[1])) for p in points]
    if closed and vertices and vertices[-1] != vertices[0]:
        vertices.append(vertices[0])
    segments = tuple(LineSegment(a, b) for a, b in zip(vertices, vertices[1:]))
    start = vertices[0] if vertices else (0.0, 0.0)
    return LoopCurve(segments, closed=closed, start_point=start)


def square_loop(cx: float, cy: float, side: float) -> LoopCurve:
    """Coordinate square with corner (cx, cy): +e1, +e2, -e1, -e2."""
    return polyline_loop(
        [(cx, cy), (cx + side, cy), (cx + side, cy + side), (cx, cy + side)]
    )


def circle_loop(cx: float, cy: float, radius: float) -> LoopCurve:
    """Counterclockwise circle starting at (cx + radius, cy)."""
    return LoopCurve((ArcSegment((cx, cy), radius, 0.0, 2 * math.pi),))


def _parse_numbers(text: str, count: int | None = None) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise SpecParseError(f"Invalid number list {text!r}") from e
    if count is not None and len(values) != count:
        raise SpecParseError(f"Expected {count} numbers, got {text!r}")
    return values


def parse_loop(spec: str, closed: bool = True) -> LoopCurve:
    """
    Parse ``square:<cx>,<cy>,<s>`` or ``polyline:x1,y1;x2,y2;...``.

    Polylines are closed automatically unless ``closed`` is False.
    """
    kind, _, body = spec.strip().partition(":")
    kind = kind.lower()
    if kind == "square":
        cx, cy, side = _parse_numbers(body, 3)
        return square_loop(cx, cy, side)
    if kind == "polyline":
        points = [_parse_numbers(chunk, 2) for chunk in body.split(";") if chunk.strip()]
        if len(points) < 2:
            raise SpecParseError("A polyline needs at least two points")
        return polyline_loop([(p[0], p[1]) for p in points], closed=closed)
    raise SpecParseError(f"Unknown curve {spec!r}; expected square:... or polyline:...")


def parse_vector(spec: str) -> tuple[float, float]:
    x1, x2 = _parse_numbers(spec, 2)
    return x1, x2


# -- connection ---------------------------------------------------------------


def connection_coefficients(
    metric: FinslerMetric, x: Sequence[ArrayLike], y: Sequence[ArrayLike]
) -> Array:
    """G^i_j(x, y) = P_j y^i + P delta^i_j, shape (2, 2, *batch)."""
    jet = lift(
        lambda y1, y2: metric.projective_factor(tuple(x), (y1, y2)) + 0.0 * y1,
        list(y),
        _FIBER_REQUEST,
        norm_like=True,
    )
    P = np.asarray(jet.value, dtype=float)
    dP = [np.asarray(jet.partial(index), dtype=float) for index in ((1, 0), (0, 1))]
    yv = [np.asarray(c, dtype=float) for c in y]
    return np.array(
        [[dP[j] * yv[i] + (P if i == j else 0.0 * P) for j in range(2)] for i in range(2)]
    )


def _safe_rows(metric: FinslerMetric, x: Array) -> NDArray[np.bool_]:
    return metric.inside(x[0], x[1]) & np.all(np.isfinite(x), axis=0)


# -- geodesics ----------------------------------------------------------------


@dataclass
class GeodesicResult:
    """Samples of a geodesic x(t) with velocity."""

    times: Array
    positions: Array
    velocities: Array
    stats: TransportStats = field(default_factory=TransportStats)

    def chord_deviation(self) -> float:
        """Max distance from the straight line through the initial point and velocity."""
        x0 = self.positions[0]
        direction = self.velocities[0] / np.linalg.norm(self.velocities[0])
        offsets = self.positions - x0
        normal = offsets[:, 0] * direction[1] - offsets[:, 1] * direction[0]
        return float(np.max(np.abs(normal)))

    def speed_drift(self, metric: FinslerMetric) -> float:
        """Max variation of F(x, dx/dt) along the samples."""
        speeds = np.asarray(
            metric.norm(tuple(self.positions.T), tuple(self.velocities.T)), dtype=float
        )
        return float(np.max(np.abs(speeds - speeds[0])))


def geodesic(
    metric: FinslerMetric,
    x0: Sequence[float],
    y0: Sequence[float],
    T: float,
    solver: SolverSettings | None = None,
    samples: int = 64,
) -> GeodesicResult:
    """
    Integrate x'' + 2 G(x, x') = 0, with G = P x' for projectively flat metrics.

    Raises:
        MetricDomainError: If x0 lies outside the domain
        BoundaryExitError: If the geodesic leaves the domain before time T
    """
    if not metric.contains(x0):
        raise MetricDomainError(f"Initial point {tuple(x0)} is outside the domain")

    def rhs(t: Array, state: Array) -> Array:
        out = np.full_like(state, np.nan)
        ok = _safe_rows(metric, state[:, :2].T)
        if np.any(ok):
            x = state[ok, :2].T
            v = state[ok, 2:].T
            P = np.asarray(metric.projective_factor(tuple(x), tuple(v)), dtype=float)
            out[ok, :2] = v.T
            out[ok, 2:] = (-2.0 * P * v).T
        return out

    def outside(t: Array, state: Array) -> NDArray[np.bool_]:
        return ~_safe_rows(metric, state[:, :2].T)

    times = np.linspace(0.0, T, samples + 1)
    state = np.array([[*x0, *y0]], dtype=float)
    states = [state[0].copy()]
    stats = TransportStats()
    for t_from, t_to in zip(times, times[1:]):
        result = integrate(rhs, (t_from, t_to), state, solver, event=outside)
        stats.steps += result.stats.steps
        stats.rejected += result.stats.rejected
        stats.evaluations += result.stats.evaluations
        if result.stopped[0]:
            exit_time = float(result.event_time[0])  # type: ignore[index]
            logger.info("Geodesic left the domain at t=%.6g", exit_time)
            raise BoundaryExitError(exit_time)
        state = result.y
        states.append(state[0].copy())
    trajectory = np.array(states)
    return GeodesicResult(times, trajectory[:, :2], trajectory[:, 2:], stats)


# -- parallel transport -------------------------------------------------------


@dataclass
class TransportResult:
    """Transported fiber vectors with the drift of F along the way."""

    vector: Array
    norm_drift: float
    stats: TransportStats = field(default_factory=TransportStats)
    flagged: bool = False


def _merge_stats(total: TransportStats, extra: TransportStats) -> None:
    total.steps += extra.steps
    total.rejected += extra.rejected
    total.evaluations += extra.evaluations


def _transport_rows(
    metric: FinslerMetric,
    segment: Segment,
    start: Array,
    solver: SolverSettings,
) -> tuple[Array, Array, TransportStats]:
    """Transport rows of fiber vectors (rows, 2) along one segment."""
    if not np.all(metric.inside(*segment.position(np.linspace(0.0, 1.0, 33)))):
        raise MetricDomainError("Curve leaves the metric domain")

    def rhs(t: Array, X: Array) -> Array:
        c = segment.position(t)
        dc = segment.velocity(t)
        G = connection_coefficients(metric, (c[0], c[1]), (X[:, 0], X[:, 1]))
        return -np.einsum("ij...,j...->...i", G, dc)

    initial = np.asarray(
        metric.norm(tuple(segment.position(np.zeros(len(start)))), (start[:, 0], start[:, 1])),
        dtype=float,
    )
    drift = np.zeros(len(start))
    scale = np.linalg.norm(start, axis=1)

    def observe(t: Array, X: Array, rows: NDArray[np.intp]) -> None:
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms < _COLLAPSE_RATIO * scale[rows]):
            raise TransportError("Transported fiber vector collapsed to zero")
        c = segment.position(t)
        values = np.asarray(metric.norm((c[0], c[1]), (X[:, 0], X[:, 1])), dtype=float)
        drift[rows] = np.maximum(drift[rows], np.abs(values - initial[rows]))

    result = integrate(rhs, (0.0, 1.0), start, solver, observer=observe)
    return result.y, drift, result.stats


def transport_along(
    metric: FinslerMetric,
    curve: LoopCurve,
    y0: ArrayLike,
    solver: SolverSettings | None = None,
) -> TransportResult:
    """
    Parallel transport of one vector (2,) or a batch (rows, 2) along a curve.

    Raises:
        TransportError: If a transported vector collapses to zero
        MetricDomainError: If the curve leaves the domain or y0 = 0
    """
    solver = solver or SolverSettings()
    start = np.asarray(y0, dtype=float)
    single = start.ndim == 1
    X = np.atleast_2d(start).copy()
    if np.any(np.linalg.norm(X, axis=1) == 0.0):
        raise MetricDomainError("Cannot transport the zero vector")
    stats = TransportStats()
    drift = np.zeros(len(X))
    for segment in curve.segments:
        X, seg_drift, seg_stats = _transport_rows(metric, segment, X, solver)
        drift = np.maximum(drift, seg_drift)
        _merge_stats(stats, seg_stats)
    worst = float(np.max(drift)) if len(drift) else 0.0
    flagged = worst > solver.drift_tolerance
    if flagged:
        logger.warning(
            "Norm drift %.3e exceeds tolerance %.1e", worst, solver.drift_tolerance
        )
    return TransportResult(
        vector=X[0] if single else X, norm_drift=worst, stats=stats, flagged=flagged
    )


def parallel_transport(
    metric: FinslerMetric,
    segment: Segment | LoopCurve,
    y0: ArrayLike,
    solver: SolverSettings | None = None,
) -> TransportResult:
    """Solve dX^i/dt = -G^i_j(c, X) dc^j/dt along a segment or curve."""
    curve = segment if isinstance(segment, LoopCurve) else LoopCurve((segment,), closed=False)
    return transport_along(metric, curve, y0, solver)


# -- holonomy -----------------------------------------------------------------


def _lift_angles(angles: Array, grid: Array) -> Array:
    unwrapped = np.unwrap(angles)
    shift = grid[0] - unwrapped[0]
    return unwrapped + 2 * np.pi * np.round(shift / (2 * np.pi))


def loop_holonomy(
    metric: FinslerMetric,
    loop: LoopCurve,
    N: int | None = None,
    solver: SolverSettings | None = None,
) -> CircleMap:
    """
    Holonomy of a closed loop as a circle map on the indicatrix at its base.

    Segments are transported in order, so the loop running ``a`` then ``b``
    has holonomy ``hol(b) o hol(a)``.

    Raises:
        ResolutionError: If the sampled map is not monotone
    """
    N = N or settings.grid_size
    if N < 16:
        raise ValueError("holonomy grids need at least 16 points")
    if not loop.closed:
        raise ValueError("holonomy needs a closed loop")
    if loop.is_degenerate:
        return CircleMap.identity(N)
    chart = IndicatrixChart(metric, loop.base_point)
    grid = circle_grid(N)
    start = chart.point(grid).T
    result = transport_along(metric, loop, start, solver)
    angles = chart.angle((result.vector[:, 0], result.vector[:, 1]))
    holonomy = CircleMap(_lift_angles(angles, grid)).validated()
    logger.debug(
        "Holonomy of loop at %s: max displacement %.3e, drift %.3e",
        loop.base_point,
        float(np.max(np.abs(holonomy.displacement()))),
        result.norm_drift,
    )
    return holonomy


@dataclass
class SmallLoopResult:
    """Extrapolated curvature field with the data it was built from."""

    field: CircleVectorField
    sides: list[float]
    profiles: list[Array]
    extrapolated: Array
    convergence_order: float | None

    def nonconstant_fraction(self) -> float:
        total = self.field.mean_square()
        return 0.0 if total == 0 else 1.0 - self.field.a0**2 / total


def _richardson(sides: Sequence[float], profiles: Sequence[Array]) -> Array:
    """Neville extrapolation to s = 0 assuming a power series in s."""
    table = [np.asarray(p, dtype=float) for p in profiles]
    h = list(sides)
    for level in range(1, len(table)):
        table = [
            (h[i + level] * table[i] - h[i] * table[i + 1]) / (h[i + level] - h[i])
            for i in range(len(table) - 1)
        ]
    return table[0]


def _convergence_order(sides: Sequence[float], profiles: Sequence[Array]) -> float | None:
    if len(profiles) < 3:
        return None
    d1 = float(np.max(np.abs(profiles[-3] - profiles[-2])))
    d2 = float(np.max(np.abs(profiles[-2] - profiles[-1])))
    floor = 1e-12
    if d1 < floor or d2 < floor:
        return None
    ratio = (sides[-3] - sides[-2]) / (sides[-2] - sides[-1])
    return math.log(d1 / d2) / math.log(ratio)


def small_loop_field(
    metric: FinslerMetric,
    x0: Sequence[float],
    sides: Sequence[float] = SMALL_LOOP_SIDES,
    N: int | None = None,
    nmax: int | None = None,
    solver: SolverSettings | None = None,
) -> SmallLoopResult:
    """
    Curvature vector field at x0 as the limit of square-loop holonomy over s^2.

    f_s(t) = (phi_s(t) - t) / s^2 is extrapolated to s = 0.

    Raises:
        ConvergenceError: If fewer than three sides are given or the observed
            convergence order is below 0.5
    """
    N = N or settings.grid_size
    nmax = nmax or settings.nmax
    ordered = sorted({float(s) for s in sides}, reverse=True)
    if ordered and ordered[-1] <= 0:
        raise ValueError("loop sides must be positive")
    if len(ordered) < 3:
        raise ConvergenceError(
            f"Extrapolation needs at least three distinct loop sides, got {len(ordered)}"
        )
    profiles = []
    for side in ordered:
        holonomy = loop_holonomy(metric, square_loop(x0[0], x0[1], side), N, solver)
        profiles.append(HOLONOMY_ORIENTATION_SIGN * holonomy.displacement() / side**2)
    order = _convergence_order(ordered, profiles)
    if order is not None and order < 0.5:
        raise ConvergenceError(f"Observed convergence order {order:.3f} is below 0.5")
    extrapolated = _richardson(ordered, profiles)
    field_ = fourier_decompose(extrapolated, min(nmax, N // 2 - 1))
    logger.info(
        "Small-loop field at %s: mean %.6g, order %s",
        tuple(x0),
        field_.a0,
        "n/a" if order is None else f"{order:.2f}",
    )
    return SmallLoopResult(field_, ordered, profiles, extrapolated, order)


def hair_power(
    metric: FinslerMetric,
    x0: Sequence[float],
    t: float,
    n: int,
    N: int | None = None,
    solver: SolverSettings | None = None,
) -> CircleMap:
    """
    n-fold composite of the holonomy of a square loop of area |t|/n at x0.

    Negative t uses the reversed loop. As n grows the result approaches the
    time-t flow of the curvature field at x0.
    """
    if n < 1:
        raise ValueError("n must be positive")
    N = N or settings.grid_size
    side = math.sqrt(abs(t) / n)
    loop = square_loop(x0[0], x0[1], side)
    if t < 0:
        loop = loop.reversed()
    step = loop_holonomy(metric, loop, N, solver)
    result = CircleMap.identity(N)
    power = step
    while n:
        if n & 1:
            result = circle_map_compose(power, result)
        n >>= 1
        if n:
            power = circle_map_compose(power, power)
    return result
