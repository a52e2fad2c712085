"""Catalog of concrete Finsler metrics on chart subsets of the plane.

Every evaluator is written once over generic scalars, so the same formula
serves plain floats, NumPy arrays (batched points) and :class:`JetScalar`
towers.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from enum import Enum

import numpy as np

from holonomy_lab.core.config import settings
from holonomy_lab.core.exceptions import (
    MetricDomainError,
    SpecParseError,
    UnsupportedMetricError,
)
from holonomy_lab.models.reports import DerivativeRequest
from holonomy_lab.services.deriv_engine import JetScalar, Scalar, lift, sqrt, value_of

logger = logging.getLogger(__name__)

Point = Sequence[Scalar]


class MetricKind(str, Enum):
    """Tags of the metrics in the catalog."""

    FUNK_PLUS = "funk:+"
    FUNK_MINUS = "funk:-"
    BRYANT_SHEN = "bryant"
    EUCLIDEAN = "euclid"


def _dot(u: Point, v: Point) -> Scalar:
    return u[0] * v[0] + u[1] * v[1]


def _fiber_nonzero(y: Point) -> None:
    squared = np.asarray(value_of(_dot(y, y)), dtype=float)
    if np.any(squared == 0.0):
        raise MetricDomainError("Finsler norms are not smooth at y = 0")


def _funk_parts(x: Point, y: Point) -> tuple[Scalar, Scalar, Scalar]:
    xx = _dot(x, x)
    xy = _dot(x, y)
    yy = _dot(y, y)
    radical = sqrt(yy - (xx * yy - xy * xy))
    return radical, xy, 1.0 - xx


def _check_funk_domain(x: Point) -> None:
    radius = np.sqrt(np.asarray(value_of(_dot(x, x)), dtype=float))
    if np.any(radius >= 1.0 - settings.funk_margin):
        raise MetricDomainError(
            f"Funk metric is defined on the open unit disk; got |x| = {np.max(radius):.12g}"
        )


def funk_norm(sign: int, x: Point, y: Point) -> Scalar:
    """
    Standard Funk metric on the unit disk.

    Args:
        sign: +1 or -1, selecting the sign of the linear term
        x: Base point with |x| < 1
        y: Nonzero fiber vector

    Returns:
        (sqrt(|y|^2 - (|x|^2|y|^2 - <x,y>^2)) +- <x,y>) / (1 - |x|^2)
    """
    _check_sign(sign)
    _check_funk_domain(x)
    _fiber_nonzero(y)
    radical, xy, denominator = _funk_parts(x, y)
    return (radical + sign * xy) / denominator


def funk_projective_factor(sign: int, x: Point, y: Point) -> Scalar:
    """Closed-form projective factor of the Funk metric with the given sign."""
    _check_sign(sign)
    _check_funk_domain(x)
    _fiber_nonzero(y)
    radical, xy, denominator = _funk_parts(x, y)
    return 0.5 * (sign * radical + xy) / denominator


def _check_sign(sign: int) -> None:
    if sign not in (1, -1):
        raise ValueError("Funk sign must be +1 or -1")


def _check_alpha(alpha: float) -> None:
    if not abs(alpha) < math.pi / 2:
        raise MetricDomainError(f"Bryant-Shen parameter needs |alpha| < pi/2, got {alpha}")


def bryant_shen_origin(alpha: float, y: Point) -> tuple[Scalar, Scalar]:
    """
    Norm and projective factor of a Bryant-Shen sphere at the chart origin.

    Returns:
        (|y| cos alpha, |y| sin alpha)
    """
    _check_alpha(alpha)
    _fiber_nonzero(y)
    length = sqrt(_dot(y, y))
    return length * math.cos(alpha), length * math.sin(alpha)


class FinslerMetric(ABC):
    """A Finsler norm on a chart subset of R^2."""

    kind: MetricKind
    curvature: float | None = None

    @property
    @abstractmethod
    def label(self) -> str:
        """Specification string of the metric."""

    @property
    def has_projective_factor(self) -> bool:
        return True

    def contains(self, x: Sequence[float]) -> bool:
        """Whether the base point lies in the domain."""
        return bool(self.inside(np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float)))

    def inside(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Vectorised domain test for batches of base points."""
        return np.ones(np.broadcast(x1, x2).shape, dtype=bool)

    @abstractmethod
    def norm(self, x: Point, y: Point) -> Scalar:
        """Evaluate F(x, y)."""

    def projective_factor(self, x: Point, y: Point) -> Scalar:
        """Evaluate the closed-form projective factor P(x, y)."""
        raise UnsupportedMetricError(
            f"Metric {self.label} has no closed-form projective factor"
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label!r})"


class FunkMetric(FinslerMetric):
    """Standard Funk plane; ``sign`` selects the branch of the linear term."""

    curvature = -0.25

    def __init__(self, sign: int = 1) -> None:
        _check_sign(sign)
        self.sign = sign
        self.kind = MetricKind.FUNK_PLUS if sign > 0 else MetricKind.FUNK_MINUS

    @property
    def label(self) -> str:
        return self.kind.value

    @property
    def origin_constant(self) -> float:
        """Ratio P(0, y)/F(0, y)."""
        return 0.5 * self.sign

    def inside(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return np.hypot(x1, x2) < 1.0 - settings.funk_margin

    def norm(self, x: Point, y: Point) -> Scalar:
        return funk_norm(self.sign, x, y)

    def projective_factor(self, x: Point, y: Point) -> Scalar:
        return funk_projective_factor(self.sign, x, y)


class EuclideanMetric(FinslerMetric):
    """Flat baseline metric F = |y|."""

    kind = MetricKind.EUCLIDEAN
    curvature = 0.0

    @property
    def label(self) -> str:
        return self.kind.value

    def norm(self, x: Point, y: Point) -> Scalar:
        _fiber_nonzero(y)
        return sqrt(_dot(y, y))

    def projective_factor(self, x: Point, y: Point) -> Scalar:
        _fiber_nonzero(y)
        return 0.0 * y[0]


class BryantShenMetric(FinslerMetric):
    """Bryant-Shen sphere, known only at the chart origin."""

    kind = MetricKind.BRYANT_SHEN
    curvature = 1.0

    def __init__(self, alpha: float) -> None:
        _check_alpha(alpha)
        self.alpha = float(alpha)

    @property
    def label(self) -> str:
        return f"bryant:{self.alpha!r}"

    @property
    def origin_constant(self) -> float:
        return math.tan(self.alpha)

    def inside(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return (np.asarray(x1) == 0.0) & (np.asarray(x2) == 0.0)

    def _check_origin(self, x: Point) -> None:
        for component in x:
            if isinstance(component, JetScalar) and np.any(component.coeffs[1:] != 0):
                raise MetricDomainError(
                    "Bryant-Shen data is known only at the origin; "
                    "base-point derivatives are unavailable"
                )
            if np.any(np.asarray(value_of(component), dtype=float) != 0.0):
                raise MetricDomainError(
                    "Bryant-Shen metric is evaluated only at the origin"
                )

    def norm(self, x: Point, y: Point) -> Scalar:
        self._check_origin(x)
        return bryant_shen_origin(self.alpha, y)[0]

    def projective_factor(self, x: Point, y: Point) -> Scalar:
        self._check_origin(x)
        return bryant_shen_origin(self.alpha, y)[1]


def projective_factor_from_norm(metric: FinslerMetric, x: Point, y: Point) -> Scalar:
    """
    Projective factor P = (1/2F) dF/dx^i y^i of a projectively flat metric.

    The base-point derivatives are taken with a first-order tower over
    (x1, x2); base points and fiber vectors are plain floats or arrays.

    Raises:
        MetricDomainError: For Bryant-Shen data away from the origin
    """
    if isinstance(metric, BryantShenMetric):
        # only the origin values are known, and there P is given directly
        return metric.projective_factor(x, y)
    if any(isinstance(c, JetScalar) for c in (*x, *y)):
        raise UnsupportedMetricError(
            "projective_factor_from_norm takes plain base points and fiber vectors"
        )
    request = DerivativeRequest(variables=("x1", "x2"), order=1, fiber=())
    jet = lift(lambda x1, x2: metric.norm((x1, x2), y), list(x), request)
    if not isinstance(jet, JetScalar):
        return 0.0 * np.asarray(y[0], dtype=float)
    dfdx1 = jet.derivative(0).value
    dfdx2 = jet.derivative(1).value
    return (dfdx1 * y[0] + dfdx2 * y[1]) / (2.0 * jet.value)


def parse_metric(spec: str) -> FinslerMetric:
    """
    Parse a metric specification string.

    Grammar: ``funk:+``, ``funk:-``, ``bryant:<alpha-radians>``, ``euclid``.
    """
    text = spec.strip().lower()
    if text in ("funk:+", "funk", "funk:plus"):
        return FunkMetric(1)
    if text in ("funk:-", "funk:minus"):
        return FunkMetric(-1)
    if text in ("euclid", "euclidean"):
        return EuclideanMetric()
    if text.startswith("bryant:"):
        try:
            alpha = float(text.split(":", 1)[1])
        except ValueError as e:
            raise SpecParseError(f"Invalid Bryant-Shen angle in {spec!r}") from e
        try:
            return BryantShenMetric(alpha)
        except MetricDomainError as e:
            raise SpecParseError(e.detail) from e
    raise SpecParseError(
        f"Unknown metric {spec!r}; expected funk:+, funk:-, bryant:<alpha> or euclid"
    )
