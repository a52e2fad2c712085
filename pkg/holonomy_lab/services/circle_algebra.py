"""Curvature vector fields on the indicatrix, their Berwald derivatives, and
the verification of the holonomy theorem at a base point.

Vertical fields are evaluated as towers over (x1, x2, y1, y2) seeded at the
base point and at every indicatrix grid point at once, so a covariant
derivative of a field is again a field and can be differentiated once more.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import lstsq, svdvals

from holonomy_lab.core.config import settings
from holonomy_lab.core.exceptions import HypothesisError
from holonomy_lab.models.reports import AlgebraEntry, AlgebraReport
from holonomy_lab.services.circle_fields import CircleVectorField, fourier_decompose
from holonomy_lab.services.circle_maps import circle_grid
from holonomy_lab.services.deriv_engine import JetScalar
from holonomy_lab.services.finsler_metrics import BryantShenMetric, FinslerMetric
from holonomy_lab.services.indicatrix import IndicatrixChart
from holonomy_lab.services.spray_geometry import (
    X_VARS,
    Y_VARS,
    SprayJets,
    curvature_jets,
    flag_curvature_extract,
    fundamental_tensor,
    projective_spray_jets,
)

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
JetVector = list[JetScalar]
SecondMode = Literal["iterated", "tensorial"]

TANGENCY_TOL = 1e-8
SECOND_FIELD_NAMES = (
    "nabla1_nabla1_xi",
    "nabla1_nabla2_xi",
    "nabla2_nabla1_xi",
    "nabla2_nabla2_xi",
)


# -- field evaluators -----------------------------------------------------------


@dataclass
class EvaluationContext:
    """Spray towers at x0 and every indicatrix grid point."""

    metric: FinslerMetric
    chart: IndicatrixChart
    grid: Array
    spray: SprayJets

    @property
    def order(self) -> int:
        return self.spray.G_jk[0][0][0].order


def evaluation_context(
    metric: FinslerMetric, x0: Sequence[float], size: int, depth: int = 0
) -> EvaluationContext:
    """
    Build towers deep enough for ``depth`` covariant derivatives of the
    curvature field (the projective factor is lifted to order 2 + depth).
    """
    chart = IndicatrixChart(metric, x0)
    grid = circle_grid(size)
    y = chart.point(grid)
    spray = projective_spray_jets(metric, chart.x0, (y[0], y[1]), order=2 + depth)
    return EvaluationContext(metric, chart, grid, spray)


class FiberField(ABC):
    """A vertical vector field xi^i(x, y) d/dy^i given as towers."""

    depth: int = 0

    @abstractmethod
    def jets(self, context: EvaluationContext) -> JetVector:
        """Components xi^1, xi^2 as towers."""

    def samples(self, context: EvaluationContext) -> Array:
        """Component values on the grid, shape (2, N)."""
        return np.array([np.asarray(c.value, dtype=float) for c in self.jets(context)])


@dataclass
class CurvatureField(FiberField):
    """xi^i = R^i_jk X^j Y^k for constant coordinate fields X, Y."""

    X: tuple[float, float] = (1.0, 0.0)
    Y: tuple[float, float] = (0.0, 1.0)
    depth: int = 0

    def jets(self, context: EvaluationContext) -> JetVector:
        R = curvature_jets(context.spray)
        components = []
        for i in range(2):
            total = 0.0 * R[i][0][0]
            for j in range(2):
                for k in range(2):
                    weight = self.X[j] * self.Y[k]
                    if weight:
                        total = total + weight * R[i][j][k]
            components.append(total)
        return components


def covariant_derivative_jets(xi: JetVector, spray: SprayJets, j: int) -> JetVector:
    """(nabla_j xi)^i = d xi^i/dx^j - G^k_j d xi^i/dy^k + G^i_jk xi^k."""
    out = []
    for i in range(2):
        term = xi[i].derivative(X_VARS[j])
        for k in range(2):
            term = term - spray.G_j[k][j] * xi[i].derivative(Y_VARS[k])
            term = term + spray.G_jk[i][j][k] * xi[k]
        out.append(term)
    return out


@dataclass
class CovariantDerivative(FiberField):
    """nabla_j of another fiber field (j = 0 or 1)."""

    inner: FiberField
    direction: int

    def __post_init__(self) -> None:
        if self.direction not in (0, 1):
            raise ValueError("direction must be 0 or 1")
        self.depth = self.inner.depth + 1

    def jets(self, context: EvaluationContext) -> JetVector:
        return covariant_derivative_jets(
            self.inner.jets(context), context.spray, self.direction
        )


@dataclass
class TensorialSecondDerivative(FiberField):
    """(nabla nabla xi)(d_j, d_k) = nabla_j nabla_k xi - G^m_kj nabla_m xi."""

    inner: FiberField
    j: int
    k: int

    def __post_init__(self) -> None:
        self.depth = self.inner.depth + 2

    def jets(self, context: EvaluationContext) -> JetVector:
        first = [CovariantDerivative(self.inner, m).jets(context) for m in range(2)]
        iterated = covariant_derivative_jets(first[self.k], context.spray, self.j)
        out = []
        for i in range(2):
            term = iterated[i]
            for m in range(2):
                term = term - context.spray.G_jk[m][self.k][self.j] * first[m][i]
            out.append(term)
        return out


# -- projection onto d/dt -----------------------------------------------------


@dataclass(frozen=True)
class ProjectedField:
    """A field on the indicatrix with its tangency residual."""

    field: CircleVectorField
    tangency_residual: float


def project_field(
    evaluator: FiberField, context: EvaluationContext, nmax: int | None = None
) -> ProjectedField:
    """Restrict a fiber field to the indicatrix and write it in the angle coordinate."""
    nmax = nmax or settings.nmax
    values = evaluator.samples(context)
    coefficient, residual = context.chart.project(context.grid, values)
    worst = float(np.max(np.abs(residual)))
    if worst > TANGENCY_TOL:
        logger.warning("Field is not tangent to the indicatrix (residual %.3e)", worst)
    field = fourier_decompose(coefficient, min(nmax, len(context.grid) // 2 - 1))
    return ProjectedField(field, worst)


def evaluate_field(
    metric: FinslerMetric,
    evaluator: FiberField,
    x0: Sequence[float],
    size: int | None = None,
    nmax: int | None = None,
) -> ProjectedField:
    size = size or settings.grid_size
    context = evaluation_context(metric, x0, size, evaluator.depth)
    return project_field(evaluator, context, nmax)


def curvature_field(
    metric: FinslerMetric,
    x0: Sequence[float],
    X: tuple[float, float] = (1.0, 0.0),
    Y: tuple[float, float] = (0.0, 1.0),
    size: int | None = None,
    nmax: int | None = None,
) -> CircleVectorField:
    """Curvature vector field R(X, Y) on the indicatrix at x0."""
    return evaluate_field(metric, CurvatureField(X, Y), x0, size, nmax).field


def berwald_derivative_field(
    metric: FinslerMetric,
    xi: FiberField,
    direction: int,
    x0: Sequence[float],
    size: int | None = None,
    nmax: int | None = None,
) -> CircleVectorField:
    """Horizontal Berwald derivative nabla_direction xi restricted to the indicatrix."""
    return evaluate_field(metric, CovariantDerivative(xi, direction), x0, size, nmax).field


def second_berwald_fields(
    metric: FinslerMetric,
    x0: Sequence[float],
    mode: SecondMode = "iterated",
    size: int | None = None,
    nmax: int | None = None,
) -> dict[str, CircleVectorField]:
    """
    The four second derivatives of R(d1, d2), keyed by ``SECOND_FIELD_NAMES``.

    Raises:
        HypothesisError: If condition A or B fails at x0
    """
    conditions = check_conditions(metric, x0)
    if not conditions.met:
        raise HypothesisError("; ".join(conditions.notes))
    size = size or settings.grid_size
    context = evaluation_context(metric, x0, size, depth=2)
    xi = CurvatureField()
    fields = {}
    for j in range(2):
        for k in range(2):
            if mode == "tensorial":
                evaluator: FiberField = TensorialSecondDerivative(xi, j, k)
            else:
                evaluator = CovariantDerivative(CovariantDerivative(xi, k), j)
            fields[f"nabla{j + 1}_nabla{k + 1}_xi"] = project_field(
                evaluator, context, nmax
            ).field
    return fields


def curvature_trace_identity(
    metric: FinslerMetric, x0: Sequence[float], size: int | None = None
) -> float:
    """Sup residual of nabla_k xi = G^m_mk xi over k and the indicatrix grid."""
    size = size or settings.grid_size
    context = evaluation_context(metric, x0, size, depth=1)
    xi = CurvatureField().jets(context)
    residual = 0.0
    for k in range(2):
        derivative = covariant_derivative_jets(xi, context.spray, k)
        trace = context.spray.G_jk[0][0][k] + context.spray.G_jk[1][1][k]
        for i in range(2):
            diff = np.asarray((derivative[i] - trace * xi[i]).value, dtype=float)
            residual = max(residual, float(np.max(np.abs(diff))))
    return residual


def curvature_algebra_rank(
    metric: FinslerMetric,
    x0: Sequence[float],
    size: int | None = None,
    nmax: int | None = None,
    tol: float = 1e-9,
) -> int:
    """Numerical rank of the span of R(d_j, d_k) over all coordinate pairs."""
    size = size or settings.grid_size
    context = evaluation_context(metric, x0, size)
    basis = ((1.0, 0.0), (0.0, 1.0))
    vectors = [
        project_field(CurvatureField(X, Y), context, nmax).field.vector()
        for X in basis
        for Y in basis
    ]
    singular = svdvals(np.array(vectors))
    if singular[0] == 0.0:
        return 0
    return int(np.sum(singular > tol * max(singular[0], 1.0)))


# -- theorem verification -----------------------------------------------------


@dataclass
class Conditions:
    """Outcome of the two pointwise hypotheses of the holonomy theorem."""

    condition_a: bool
    condition_b: bool
    radius: float
    c: float | None
    notes: list[str]

    @property
    def met(self) -> bool:
        return self.condition_a and self.condition_b


def check_conditions(
    metric: FinslerMetric, x0: Sequence[float], samples: int = 64, tol: float | None = None
) -> Conditions:
    """
    Condition A: F(x0, .) is a Euclidean norm, i.e. g = r0^-2 I on the indicatrix.
    Condition B: P(x0, y) = c F(x0, y) with a constant c != 0.
    """
    tol = tol or settings.tol_pipeline
    chart = IndicatrixChart(metric, x0)
    t = circle_grid(samples)
    y = chart.point(t)
    radii = chart.radius(t)
    r0 = float(np.mean(radii))
    g = fundamental_tensor(metric, chart.x0, (y[0], y[1])).g
    target = np.eye(2)[:, :, None] / r0**2
    deviation = float(np.max(np.abs(g - target)))
    condition_a = chart.is_round(samples, tol) and deviation <= tol
    notes = []
    if not condition_a:
        notes.append(f"condition A fails: F(x0, .) is not Euclidean (deviation {deviation:.3e})")

    c: float | None = None
    condition_b = False
    if metric.has_projective_factor:
        ratio = np.asarray(metric.projective_factor(chart.x0, (y[0], y[1])), dtype=float)
        ratio = ratio / chart.norm((y[0], y[1]))
        c = float(np.mean(ratio))
        spread = float(np.ptp(ratio))
        condition_b = spread <= tol and abs(c) > tol
        if spread > tol:
            notes.append(f"condition B fails: P/F is not constant (spread {spread:.3e})")
        elif abs(c) <= tol:
            notes.append("condition B fails: c = 0")
    else:
        notes.append("condition B fails: no projective factor")
    return Conditions(condition_a, condition_b, r0, c, notes)


def _field(nmax: int, a0: float = 0.0, **modes: float) -> CircleVectorField:
    """Field from named modes such as cos1=..., sin2=...."""
    field = CircleVectorField.constant(a0, nmax)
    for name, value in modes.items():
        n = int(name[3:])
        if name.startswith("cos"):
            field.cos[n - 1] = value
        else:
            field.sin[n - 1] = value
    return field


def expected_fields(c: float, lam: float, nmax: int) -> dict[str, CircleVectorField]:
    """
    Closed forms on the unit indicatrix under conditions A and B.

    nabla_k xi = 3 P_k xi and nabla_j nabla_k xi = (12 c^2 y^j y^k - 3 lam delta^jk) xi.
    """
    cross = 6 * c * c * lam
    diagonal = lam * (6 * c * c - 3 * lam)
    return {
        "xi": _field(nmax, lam),
        "nabla1_xi": _field(nmax, cos1=3 * c * lam),
        "nabla2_xi": _field(nmax, sin1=3 * c * lam),
        "nabla1_nabla2_xi": _field(nmax, sin2=cross),
        "nabla1_nabla1_xi": _field(nmax, diagonal, cos2=cross),
        "nabla2_nabla2_xi": _field(nmax, diagonal, cos2=-cross),
    }


def expected_tensorial_fields(c: float, lam: float, nmax: int) -> dict[str, CircleVectorField]:
    """(nabla nabla xi)(d_j, d_k) = (9 c^2 y^j y^k - 3 (c^2 + lam) delta^jk) xi."""
    cross = 4.5 * c * c * lam
    diagonal = lam * (4.5 * c * c - 3 * (c * c + lam))
    return {
        "nabla1_nabla2_xi": _field(nmax, sin2=cross),
        "nabla1_nabla1_xi": _field(nmax, diagonal, cos2=cross),
        "nabla2_nabla2_xi": _field(nmax, diagonal, cos2=-cross),
    }


def displayed_fields(c: float, lam: float, nmax: int) -> dict[str, CircleVectorField]:
    """Forms as printed alongside the theorem, kept for comparison only."""
    diagonal = lam * (c * c + 2 * c * c - lam)
    return {
        "nabla2_xi": _field(nmax, sin1=-3 * c * lam),
        "nabla1_nabla2_xi": _field(nmax, sin2=c * c * lam),
        "nabla1_nabla1_xi": _field(nmax, diagonal, cos2=c * c * lam),
        "nabla2_nabla2_xi": _field(nmax, diagonal, cos2=-c * c * lam),
    }


def _entry(
    name: str,
    expected: CircleVectorField,
    computed: CircleVectorField,
    tol: float,
    informational: bool = False,
) -> AlgebraEntry:
    error = expected.distance(computed)
    return AlgebraEntry(
        name=name,
        expected=expected.to_payload(),
        computed=computed.to_payload(),
        sup_error=error,
        passed=error <= tol,
        informational=informational,
    )


def spanning_residual(fields: Sequence[CircleVectorField], nmax: int) -> float:
    """
    Least-squares residual of writing d/dt, cos t, sin t, cos 2t, sin 2t
    as combinations of ``fields``.
    """
    A = np.array([f.resize(nmax).vector() for f in fields]).T
    targets = np.array(
        [
            _field(nmax, 1.0).vector(),
            _field(nmax, cos1=1.0).vector(),
            _field(nmax, sin1=1.0).vector(),
            _field(nmax, cos2=1.0).vector(),
            _field(nmax, sin2=1.0).vector(),
        ]
    ).T
    solution, *_ = lstsq(A, targets)
    return float(np.max(np.abs(A @ solution - targets)))


def computed_fields(
    metric: FinslerMetric, x0: Sequence[float], size: int, nmax: int
) -> tuple[dict[str, CircleVectorField], float]:
    """The six fields through the tower pipeline, with the worst tangency residual."""
    context = evaluation_context(metric, x0, size, depth=2)
    xi = CurvatureField()
    evaluators: dict[str, FiberField] = {
        "xi": xi,
        "nabla1_xi": CovariantDerivative(xi, 0),
        "nabla2_xi": CovariantDerivative(xi, 1),
        "nabla1_nabla2_xi": CovariantDerivative(CovariantDerivative(xi, 1), 0),
        "nabla1_nabla1_xi": CovariantDerivative(CovariantDerivative(xi, 0), 0),
        "nabla2_nabla2_xi": CovariantDerivative(CovariantDerivative(xi, 1), 1),
    }
    fields = {}
    worst = 0.0
    for name, evaluator in evaluators.items():
        projected = project_field(evaluator, context, nmax)
        fields[name] = projected.field
        if evaluator.depth == 0:
            worst = max(worst, projected.tangency_residual)
    return fields, worst


def verify_theorem(
    metric: FinslerMetric,
    x0: Sequence[float] = (0.0, 0.0),
    size: int | None = None,
    nmax: int | None = None,
    tol: float | None = None,
) -> AlgebraReport:
    """
    Check the hypotheses of the holonomy theorem at x0 and compare the six
    fields of its proof with their closed forms.

    Bryant-Shen data is known at the origin only, so its fields are the
    closed forms with c = tan(alpha), lambda = 1 substituted.
    """
    size = size or settings.grid_size
    nmax = nmax or settings.nmax
    tol = tol or settings.tol_pipeline
    x0 = (float(x0[0]), float(x0[1]))
    conditions = check_conditions(metric, x0)
    report = AlgebraReport(
        metric=metric.label,
        base_point=x0,
        condition_a=conditions.condition_a,
        condition_b=conditions.condition_b,
        c=conditions.c,
        hypotheses_met=conditions.met,
        notes=list(conditions.notes),
    )
    if not conditions.met:
        logger.info("Hypotheses not met for %s at %s", metric.label, x0)
        report.notes.append("theorem hypotheses not met")
        return report
    assert conditions.c is not None
    c = conditions.c

    if isinstance(metric, BryantShenMetric):
        lam = float(metric.curvature or 0.0)
        fields = expected_fields(c, lam, nmax)
        tensorial = expected_tensorial_fields(c, lam, nmax)
        report.notes.append("closed-form path: only origin data is available")
    else:
        chart = IndicatrixChart(metric, x0)
        y = chart.point(0.0)
        lam, fit_residual = flag_curvature_extract(metric, x0, (float(y[0]), float(y[1])))
        if fit_residual > tol:
            report.notes.append(f"curvature fit residual {fit_residual:.3e}")
        fields, tangency = computed_fields(metric, x0, size, nmax)
        if tangency > TANGENCY_TOL:
            report.notes.append(f"curvature field tangency residual {tangency:.3e}")
        tensorial = second_berwald_fields(metric, x0, "tensorial", size, nmax)
    report.curvature = lam

    expected = expected_fields(c, lam, nmax)
    for name, field in expected.items():
        report.entries.append(_entry(name, field, fields[name], tol))
    for name, field in expected_tensorial_fields(c, lam, nmax).items():
        report.entries.append(_entry(f"tensorial:{name}", field, tensorial[name], tol))
    for name, field in displayed_fields(c, lam, nmax).items():
        report.entries.append(
            _entry(f"display:{name}", field, fields[name], tol, informational=True)
        )
    report.spanning_residual = spanning_residual(list(fields.values()), nmax)
    logger.info(
        "Verified %s at %s: c=%.6g lambda=%.6g spanning residual %.3e",
        metric.label,
        x0,
        c,
        lam,
        report.spanning_residual,
    )
    return report

