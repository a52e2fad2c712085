"""Fundamental tensor, spray, connection and curvature over derivative towers.

Two routes lead to the geodesic coefficients: the generic route starts from
the fundamental tensor of F, the projective route from the projective factor
P of a projectively flat metric (G^i = P y^i). Both produce towers, so every
coefficient stays differentiable for the covariant derivatives built on top.

Index conventions for the arrays returned here: ``G[i]`` is G^i,
``G_j[i][j]`` is G^i_j, ``G_jk[i][j][k]`` is G^i_jk, ``R[i][j][k]`` is
R^i_jk. Tower variables are ordered (x1, x2, y1, y2).
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from holonomy_lab.core.config import settings
from holonomy_lab.core.exceptions import (
    DerivativeOrderError,
    SingularTensorError,
    UnsupportedMetricError,
)
from holonomy_lab.models.reports import DerivativeRequest
from holonomy_lab.services.deriv_engine import JetScalar, lift
from holonomy_lab.services.finsler_metrics import BryantShenMetric, FinslerMetric

logger = logging.getLogger(__name__)

SprayPath = Literal["projective", "generic"]

X_VARS = (0, 1)
Y_VARS = (2, 3)
FULL_REQUEST_VARIABLES = ("x1", "x2", "y1", "y2")

# Tower order needed by the generic route to reach G^i_jk and dG^i_j/dx.
GENERIC_ORDER = 5

Array = NDArray[np.float64]
JetVector = list[JetScalar]
JetMatrix = list[list[JetScalar]]
JetCube = list[list[list[JetScalar]]]


@dataclass(frozen=True)
class FundamentalTensor:
    """g_ij at (x, y); trailing axes are batch axes."""

    g: Array

    @property
    def determinant(self) -> Array:
        return self.g[0, 0] * self.g[1, 1] - self.g[0, 1] * self.g[1, 0]

    def inverse(self) -> Array:
        det = self.determinant
        return np.array(
            [[self.g[1, 1], -self.g[0, 1]], [-self.g[1, 0], self.g[0, 0]]]
        ) / det


@dataclass(frozen=True)
class SprayData:
    """Geodesic coefficients, nonlinear connection and Berwald coefficients."""

    G: Array
    G_j: Array
    G_jk: Array


@dataclass(frozen=True)
class CurvatureTensor:
    """R^i_jk at (x, y)."""

    R: Array

    def antisymmetry_residual(self) -> float:
        return float(np.max(np.abs(self.R + np.swapaxes(self.R, 1, 2))))


@dataclass(frozen=True)
class SprayJets:
    """Spray quantities as towers over (x1, x2, y1, y2)."""

    G: JetVector
    G_j: JetMatrix
    G_jk: JetCube

    def values(self) -> SprayData:
        return SprayData(
            G=_jet_array(self.G),
            G_j=_jet_array(self.G_j),
            G_jk=_jet_array(self.G_jk),
        )


def _jet_array(nested: object) -> Array:
    if isinstance(nested, JetScalar):
        return np.asarray(nested.value, dtype=float)
    return np.array([_jet_array(item) for item in nested])  # type: ignore[attr-defined]


def _full_lift(
    metric: FinslerMetric,
    x: Sequence[ArrayLike],
    y: Sequence[ArrayLike],
    order: int,
    evaluator: str,
) -> JetScalar:
    request = DerivativeRequest(variables=FULL_REQUEST_VARIABLES, order=order)
    point = [*x, *y]
    function = getattr(metric, evaluator)
    return lift(
        lambda x1, x2, y1, y2: function((x1, x2), (y1, y2)) + 0.0 * y1,
        point,
        request,
        norm_like=True,
    )


def _check_positive_definite(g: Array) -> None:
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    if np.any(np.abs(det) <= settings.det_guard):
        raise SingularTensorError(
            f"Fundamental tensor is singular (|det g| = {np.min(np.abs(det)):.3e})"
        )
    if np.any(det <= 0) or np.any(g[0, 0] <= 0):
        raise SingularTensorError()


def fundamental_tensor(
    metric: FinslerMetric, x: Sequence[ArrayLike], y: Sequence[ArrayLike]
) -> FundamentalTensor:
    """
    Compute g_ij = 1/2 d^2(F^2)/dy^i dy^j at (x, y).

    Only the fiber is differentiated, so origin-only metrics qualify.

    Raises:
        SingularTensorError: If g is singular or not positive definite
    """
    request = DerivativeRequest(variables=("y1", "y2"), order=2, fiber=("y1", "y2"))
    energy = lift(
        lambda y1, y2: 0.5 * metric.norm(tuple(x), (y1, y2)) ** 2,
        list(y),
        request,
        norm_like=True,
    )
    g = np.array(
        [
            [energy.partial((2, 0)), energy.partial((1, 1))],
            [energy.partial((1, 1)), energy.partial((0, 2))],
        ],
        dtype=float,
    )
    _check_positive_definite(g)
    return FundamentalTensor(g)


def _fiber_vector(x: Sequence[ArrayLike], y: Sequence[ArrayLike], order: int) -> JetVector:
    nvars = len(FULL_REQUEST_VARIABLES)
    return [JetScalar.variable(y[i], Y_VARS[i], nvars, order) for i in range(2)]


def generic_spray_jets(
    metric: FinslerMetric,
    x: Sequence[ArrayLike],
    y: Sequence[ArrayLike],
    order: int = GENERIC_ORDER,
) -> SprayJets:
    """
    Spray towers from G^i = 1/4 g^il (2 dg_jl/dx^k - dg_jk/dx^l) y^j y^k.

    The norm is lifted to ``order``; G comes out at ``order - 3``, the
    connection at ``order - 4`` and the Berwald coefficients at ``order - 5``.
    """
    if order < 3:
        raise DerivativeOrderError("The generic spray route needs a tower of order >= 3")
    if isinstance(metric, BryantShenMetric):
        raise UnsupportedMetricError(
            "The generic spray route needs base-point derivatives of F"
        )
    norm = _full_lift(metric, x, y, order, "norm")
    energy = 0.5 * norm * norm
    g = [[energy.derivative(Y_VARS[i]).derivative(Y_VARS[j]) for j in range(2)] for i in range(2)]
    det = g[0][0] * g[1][1] - g[0][1] * g[1][0]
    det_value = np.asarray(det.value)
    if np.any(np.abs(det_value) <= settings.det_guard):
        raise SingularTensorError(
            f"Fundamental tensor is singular (|det g| = {np.min(np.abs(det_value)):.3e})"
        )
    inv_det = det.reciprocal()
    g_inv = [[g[1][1] * inv_det, -g[0][1] * inv_det], [-g[1][0] * inv_det, g[0][0] * inv_det]]
    dg = [[[g[j][l].derivative(X_VARS[k]) for k in range(2)] for l in range(2)] for j in range(2)]
    ys = _fiber_vector(x, y, order)

    # bracket_l = (2 dg_jl/dx^k - dg_jk/dx^l) y^j y^k
    bracket = []
    for l in range(2):
        total = None
        for j in range(2):
            for k in range(2):
                term = (2.0 * dg[j][l][k] - dg[j][k][l]) * ys[j] * ys[k]
                total = term if total is None else total + term
        bracket.append(total)
    G = [0.25 * (g_inv[i][0] * bracket[0] + g_inv[i][1] * bracket[1]) for i in range(2)]
    G_j = [[G[i].derivative(Y_VARS[j]) for j in range(2)] for i in range(2)]
    G_jk = [
        [[G_j[i][j].derivative(Y_VARS[k]) for k in range(2)] for j in range(2)]
        for i in range(2)
    ]
    return SprayJets(G, G_j, G_jk)


def projective_spray_jets(
    metric: FinslerMetric,
    x: Sequence[ArrayLike],
    y: Sequence[ArrayLike],
    order: int = 3,
) -> SprayJets:
    """
    Spray towers of a projectively flat metric from its projective factor.

    G^i = P y^i, G^i_k = P_k y^i + P delta^i_k,
    G^i_kl = P_kl y^i + P_k delta^i_l + P_l delta^i_k.
    P is lifted to ``order``; the Berwald coefficients come out at
    ``order - 2``.
    """
    if order < 2:
        raise DerivativeOrderError("The projective spray route needs a tower of order >= 2")
    if not metric.has_projective_factor:
        raise UnsupportedMetricError(
            f"Metric {metric.label} has no closed-form projective factor"
        )
    P = _full_lift(metric, x, y, order, "projective_factor")
    ys = _fiber_vector(x, y, order)
    dP = [P.derivative(Y_VARS[k]) for k in range(2)]
    ddP = [[dP[k].derivative(Y_VARS[l]) for l in range(2)] for k in range(2)]

    G = [P * ys[i] for i in range(2)]
    G_j = [
        [dP[k] * ys[i] + (P if i == k else 0.0 * P) for k in range(2)] for i in range(2)
    ]
    G_jk = []
    for i in range(2):
        rows = []
        for k in range(2):
            row = []
            for l in range(2):
                term = ddP[k][l] * ys[i]
                if i == l:
                    term = term + dP[k]
                if i == k:
                    term = term + dP[l]
                row.append(term)
            rows.append(row)
        G_jk.append(rows)
    return SprayJets(G, G_j, G_jk)


def spray_generic(
    metric: FinslerMetric, x: Sequence[ArrayLike], y: Sequence[ArrayLike]
) -> SprayData:
    """Geodesic coefficients, connection and Berwald coefficients from F."""
    return generic_spray_jets(metric, x, y).values()


def spray_projective(
    metric: FinslerMetric, x: Sequence[ArrayLike], y: Sequence[ArrayLike]
) -> SprayData:
    """Geodesic coefficients, connection and Berwald coefficients from P."""
    return projective_spray_jets(metric, x, y, order=2).values()


def curvature_jets(spray: SprayJets) -> JetCube:
    """
    R^i_jk = dG^i_j/dx^k - dG^i_k/dx^j + G^m_j G^i_km - G^m_k G^i_jm.

    The connection towers must have order >= 1.
    """
    R: JetCube = []
    for i in range(2):
        rows = []
        for j in range(2):
            row = []
            for k in range(2):
                term = spray.G_j[i][j].derivative(X_VARS[k]) - spray.G_j[i][k].derivative(
                    X_VARS[j]
                )
                for m in range(2):
                    term = term + spray.G_j[m][j] * spray.G_jk[i][k][m]
                    term = term - spray.G_j[m][k] * spray.G_jk[i][j][m]
                row.append(term)
            rows.append(row)
        R.append(rows)
    return R


def _spray_for_order(
    metric: FinslerMetric,
    x: Sequence[ArrayLike],
    y: Sequence[ArrayLike],
    path: SprayPath,
    result_order: int,
) -> SprayJets:
    """Spray towers whose curvature has order ``result_order``."""
    if path == "generic":
        return generic_spray_jets(metric, x, y, order=GENERIC_ORDER + result_order)
    return projective_spray_jets(metric, x, y, order=2 + result_order)


def curvature_tensor(
    metric: FinslerMetric,
    x: Sequence[ArrayLike],
    y: Sequence[ArrayLike],
    path: SprayPath = "projective",
) -> CurvatureTensor:
    """Riemann curvature R^i_jk at (x, y) through the chosen spray route."""
    spray = _spray_for_order(metric, x, y, path, result_order=0)
    return CurvatureTensor(_jet_array(curvature_jets(spray)))


def constant_curvature_pattern(g: Array, y: Sequence[ArrayLike]) -> Array:
    """C^i_jk = delta^i_k g_jm y^m - delta^i_j g_km y^m (R = lambda C)."""
    gy = np.einsum("jm...,m...->j...", g, np.asarray(y, dtype=float))
    pattern = np.zeros((2, 2, 2, *gy.shape[1:]))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                pattern[i, j, k] = (i == k) * gy[j] - (i == j) * gy[k]
    return pattern


def flag_curvature_extract(
    metric: FinslerMetric,
    x: Sequence[float],
    y: Sequence[float],
    path: SprayPath = "projective",
) -> tuple[float, float]:
    """
    Least-squares fit of lambda in R^i_jk = lambda C^i_jk.

    Returns:
        Tuple of (fitted lambda, max componentwise residual)
    """
    R = curvature_tensor(metric, x, y, path).R
    C = constant_curvature_pattern(fundamental_tensor(metric, x, y).g, y)
    weight = float(np.sum(C * C))
    if weight <= settings.det_guard:
        raise SingularTensorError("Constant-curvature pattern vanishes at this point")
    lam = float(np.sum(R * C)) / weight
    residual = float(np.max(np.abs(R - lam * C)))
    if residual > settings.tol_pipeline:
        logger.warning(
            "Metric %s does not fit constant curvature at x=%s y=%s (residual %.3e)",
            metric.label,
            tuple(x),
            tuple(y),
            residual,
        )
    return lam, residual


def projective_identity_residual(
    metric: FinslerMetric, x: Sequence[float], y: Sequence[float]
) -> float:
    """
    Max residual of the mixed-partial identity of the projective factor,
    d^2P/dx^j dy^k = P_j P_k + P P_jk - lambda (F_j F_k + F F_jk).
    """
    if metric.curvature is None:
        raise UnsupportedMetricError(f"Metric {metric.label} has no known curvature")
    lam = metric.curvature
    P = _full_lift(metric, x, y, 2, "projective_factor")
    F = _full_lift(metric, x, y, 2, "norm")
    residual = 0.0
    for j in range(2):
        for k in range(2):
            yj = [0, 0, 0, 0]
            yk = [0, 0, 0, 0]
            yj[Y_VARS[j]] += 1
            yk[Y_VARS[k]] += 1
            yjk = [a + b for a, b in zip(yj, yk)]
            mixed = [0, 0, 0, 0]
            mixed[X_VARS[j]] += 1
            mixed[Y_VARS[k]] += 1
            lhs = P.partial(mixed)
            rhs = (
                P.partial(yj) * P.partial(yk)
                + P.value * P.partial(yjk)
                - lam * (F.partial(yj) * F.partial(yk) + F.value * F.partial(yjk))
            )
            residual = max(residual, float(np.max(np.abs(lhs - rhs))))
    return residual


def homogeneity_residuals(
    metric: FinslerMetric,
    x: Sequence[float],
    y: Sequence[float],
    path: SprayPath = "projective",
) -> dict[str, float]:
    """
    Relative residuals of the Euler relations implied by homogeneity.

    y^j dF/dy^j = F, y^j G^i_j = 2 G^i, y^k G^i_jk = G^i_j, g_ij y^i y^j = F^2.
    """
    request = DerivativeRequest(variables=("y1", "y2"), order=1, fiber=("y1", "y2"))
    F = lift(lambda y1, y2: metric.norm(tuple(x), (y1, y2)), list(y), request, norm_like=True)
    yv = np.asarray(y, dtype=float)
    euler_f = abs(F.partial((1, 0)) * yv[0] + F.partial((0, 1)) * yv[1] - F.value)
    spray = spray_generic(metric, x, y) if path == "generic" else spray_projective(metric, x, y)
    scale_g = max(float(np.max(np.abs(spray.G))), 1.0)
    scale_gj = max(float(np.max(np.abs(spray.G_j))), 1.0)
    euler_g = float(np.max(np.abs(np.einsum("ij,j->i", spray.G_j, yv) - 2.0 * spray.G)))
    euler_gjk = float(np.max(np.abs(np.einsum("ijk,k->ij", spray.G_jk, yv) - spray.G_j)))
    g = fundamental_tensor(metric, x, y).g
    energy = float(yv @ g @ yv)
    return {
        "euler_norm": float(euler_f) / abs(float(F.value)),
        "euler_spray": euler_g / scale_g,
        "euler_connection": euler_gjk / scale_gj,
        "energy": abs(energy - float(F.value) ** 2) / float(F.value) ** 2,
    }
