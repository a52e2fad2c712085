"""Angle charts on the unit indicatrix I_x = {y : F(x, y) = 1}."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from holonomy_lab.models.reports import DerivativeRequest
from holonomy_lab.services.deriv_engine import lift
from holonomy_lab.services.finsler_metrics import FinslerMetric

Array = NDArray[np.float64]

_FIBER_REQUEST = DerivativeRequest(variables=("y1", "y2"), order=1, fiber=("y1", "y2"))


class IndicatrixChart:
    """
    Parameterizes I_x by the Euclidean polar angle: y(t) = u(t) / F(x, u(t)),
    u(t) = (cos t, sin t). The coordinate t is the chart angle on the circle.
    """

    def __init__(self, metric: FinslerMetric, x0: Sequence[float]) -> None:
        self.metric = metric
        self.x0 = (float(x0[0]), float(x0[1]))

    def _norm_gradient(self, y: Sequence[ArrayLike]) -> tuple[Array, Array]:
        """F(x0, y) and its fiber gradient, batched over y."""
        jet = lift(
            lambda y1, y2: self.metric.norm(self.x0, (y1, y2)),
            list(y),
            _FIBER_REQUEST,
            norm_like=True,
        )
        value = np.asarray(jet.value, dtype=float)
        gradient = np.stack(
            [
                np.asarray(jet.partial((1, 0)), dtype=float),
                np.asarray(jet.partial((0, 1)), dtype=float),
            ]
        )
        return value, gradient

    def norm(self, y: Sequence[ArrayLike]) -> Array:
        return np.asarray(self.metric.norm(self.x0, tuple(y)), dtype=float)

    def radius(self, t: ArrayLike) -> Array:
        """Euclidean length 1/F(x0, u(t)) of the indicatrix point at angle t."""
        t = np.asarray(t, dtype=float)
        return 1.0 / self.norm((np.cos(t), np.sin(t)))

    def point(self, t: ArrayLike) -> Array:
        """Indicatrix points y(t), shape (2, *t.shape)."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.cos(t), np.sin(t)]) * self.radius(t)

    def tangent(self, t: ArrayLike) -> Array:
        """dy/dt = u'/F - u (dF(u') / F^2), shape (2, *t.shape)."""
        t = np.asarray(t, dtype=float)
        u = np.stack([np.cos(t), np.sin(t)])
        du = np.stack([-np.sin(t), np.cos(t)])
        value, gradient = self._norm_gradient(u)
        slope = np.sum(gradient * du, axis=0)
        return du / value - u * slope / value**2

    def angle(self, y: Sequence[ArrayLike]) -> Array:
        """Chart angle of a fiber vector in (-pi, pi]."""
        return np.arctan2(np.asarray(y[1], dtype=float), np.asarray(y[0], dtype=float))

    def project(self, t: ArrayLike, xi: Sequence[ArrayLike]) -> tuple[Array, Array]:
        """
        Write a vertical vector xi at y(t) as a multiple of d/dt.

        Returns:
            The d/dt coefficient det(xi, y)/det(dy/dt, y) and the tangency
            residual dF_y(xi), which vanishes for vectors tangent to I_x
        """
        t = np.asarray(t, dtype=float)
        y = self.point(t)
        dy = self.tangent(t)
        xi1 = np.asarray(xi[0], dtype=float)
        xi2 = np.asarray(xi[1], dtype=float)
        coefficient = (xi1 * y[1] - xi2 * y[0]) / (dy[0] * y[1] - dy[1] * y[0])
        _, gradient = self._norm_gradient(y)
        residual = gradient[0] * xi1 + gradient[1] * xi2
        return coefficient, residual

    def is_round(self, samples: int = 64, tol: float = 1e-10) -> bool:
        """Whether I_x is a Euclidean circle centred at 0."""
        radii = self.radius(2 * np.pi * np.arange(samples) / samples)
        return bool(np.ptp(radii) <= tol * np.max(radii))
