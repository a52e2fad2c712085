"""Truncated multivariate Taylor towers for exact higher-order partials.

A :class:`JetScalar` stores the Taylor coefficients of a smooth function
around a base point, for every monomial of total degree up to the tower
order. Arithmetic is the truncated polynomial algebra, elementary functions
are applied by Taylor composition, so all stored mixed partials are exact up
to floating round-off and symmetric by construction.

Coefficient arrays carry optional trailing batch axes: a single jet can hold
the towers of many base points at once, which the geometry layer uses to
evaluate whole indicatrix grids in one pass.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cache
from typing import Any, Union

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from holonomy_lab.core.config import settings
from holonomy_lab.core.exceptions import DerivativeOrderError, MetricDomainError
from holonomy_lab.models.reports import DerivativeRequest

logger = logging.getLogger(__name__)

Number = Union[float, NDArray[np.float64]]
Scalar = Union["JetScalar", float, NDArray[np.float64]]


@dataclass(frozen=True)
class JetSpace:
    """Monomial bookkeeping for towers in ``nvars`` variables up to ``order``."""

    nvars: int
    order: int
    monomials: tuple[tuple[int, ...], ...]
    index: dict[tuple[int, ...], int]

    @property
    def size(self) -> int:
        return len(self.monomials)


@cache
def jet_space(nvars: int, order: int) -> JetSpace:
    """Build (and cache) the graded monomial basis of a tower."""
    monomials: list[tuple[int, ...]] = []
    for degree in range(order + 1):
        graded = [
            alpha
            for alpha in itertools.product(range(degree + 1), repeat=nvars)
            if sum(alpha) == degree
        ]
        monomials.extend(sorted(graded, reverse=True))
    index = {alpha: k for k, alpha in enumerate(monomials)}
    return JetSpace(nvars, order, tuple(monomials), index)


@cache
def _product_table(
    nvars: int, order: int
) -> tuple[NDArray[np.intp], NDArray[np.intp], sp.csr_matrix]:
    space = jet_space(nvars, order)
    left: list[int] = []
    right: list[int] = []
    target: list[int] = []
    for i, a in enumerate(space.monomials):
        for j, b in enumerate(space.monomials):
            if sum(a) + sum(b) > order:
                continue
            left.append(i)
            right.append(j)
            target.append(space.index[tuple(p + q for p, q in zip(a, b))])
    scatter = sp.csr_matrix(
        (np.ones(len(target)), (target, np.arange(len(target)))),
        shape=(space.size, len(target)),
    )
    return np.asarray(left), np.asarray(right), scatter


@cache
def _derivative_table(
    nvars: int, order: int, var: int
) -> tuple[NDArray[np.intp], NDArray[np.float64]]:
    # d/dv sum c_a y^a: coefficient at a in the (order-1) space is (a_v+1) c_{a+e_v}
    source = jet_space(nvars, order)
    lowered = jet_space(nvars, order - 1)
    src = np.empty(lowered.size, dtype=np.intp)
    factor = np.empty(lowered.size)
    for k, alpha in enumerate(lowered.monomials):
        raised = list(alpha)
        raised[var] += 1
        src[k] = source.index[tuple(raised)]
        factor[k] = raised[var]
    return src, factor


class JetScalar:
    """Value plus all mixed partials up to a fixed total order."""

    __slots__ = ("coeffs", "space")

    # numpy operands defer to the reflected jet operators
    __array_ufunc__ = None

    def __init__(self, coeffs: NDArray[np.float64], space: JetSpace) -> None:
        if coeffs.shape[0] != space.size:
            raise ValueError("coefficient array does not match the jet space")
        self.coeffs = coeffs
        self.space = space

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(
        cls, value: ArrayLike, nvars: int, order: int
    ) -> JetScalar:
        space = jet_space(nvars, order)
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((space.size, *value.shape))
        coeffs[0] = value
        return cls(coeffs, space)

    @classmethod
    def variable(
        cls, value: ArrayLike, var: int, nvars: int, order: int
    ) -> JetScalar:
        jet = cls.constant(value, nvars, order)
        unit = tuple(1 if i == var else 0 for i in range(nvars))
        jet.coeffs[jet.space.index[unit]] = 1.0
        return jet

    # -- inspection -------------------------------------------------------

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def nvars(self) -> int:
        return self.space.nvars

    @property
    def value(self) -> Number:
        return self.coeffs[0] if self.coeffs.ndim > 1 else float(self.coeffs[0])

    def partial(self, alpha: Sequence[int]) -> Number:
        """Mixed partial for the exponent tuple ``alpha`` (one entry per variable)."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.nvars:
            raise ValueError(f"multi-index must have {self.nvars} entries")
        if sum(alpha) > self.order:
            raise DerivativeOrderError(
                f"Partial of order {sum(alpha)} requested from a tower of order "
                f"{self.order}"
            )
        scale = math.prod(math.factorial(a) for a in alpha)
        coeff = self.coeffs[self.space.index[alpha]] * scale
        return coeff if self.coeffs.ndim > 1 else float(coeff)

    def partials(self) -> dict[tuple[int, ...], Number]:
        return {alpha: self.partial(alpha) for alpha in self.space.monomials}

    def derivative(self, var: int) -> JetScalar:
        """Tower of the partial derivative in variable ``var`` (order drops by one)."""
        if self.order < 1:
            raise DerivativeOrderError("Cannot differentiate an order-0 tower")
        src, factor = _derivative_table(self.nvars, self.order, var)
        shape = (-1,) + (1,) * (self.coeffs.ndim - 1)
        coeffs = self.coeffs[src] * factor.reshape(shape)
        return JetScalar(coeffs, jet_space(self.nvars, self.order - 1))

    def truncate(self, order: int) -> JetScalar:
        if order > self.order:
            raise DerivativeOrderError("Cannot raise the order of a tower")
        if order == self.order:
            return self
        space = jet_space(self.nvars, order)
        return JetScalar(self.coeffs[: space.size], space)

    def __repr__(self) -> str:
        return f"JetScalar(value={self.value!r}, nvars={self.nvars}, order={self.order})"

    # -- algebra ----------------------------------------------------------

    def _coerce(self, other: Scalar) -> tuple[JetScalar, JetScalar]:
        if isinstance(other, JetScalar):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable sets")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, JetScalar.constant(other, self.nvars, self.order)

    def __add__(self, other: Scalar) -> JetScalar:
        if not isinstance(other, JetScalar):
            value = np.asarray(other, dtype=float)
            coeffs = _with_batch(self.coeffs, value.shape).copy()
            coeffs[0] = coeffs[0] + value
            return JetScalar(coeffs, self.space)
        a, b = self._coerce(other)
        batch = np.broadcast_shapes(a.coeffs.shape[1:], b.coeffs.shape[1:])
        return JetScalar(
            _with_batch(a.coeffs, batch) + _with_batch(b.coeffs, batch), a.space
        )

    __radd__ = __add__

    def __neg__(self) -> JetScalar:
        return JetScalar(-self.coeffs, self.space)

    def __sub__(self, other: Scalar) -> JetScalar:
        return self + (-other)

    def __rsub__(self, other: Scalar) -> JetScalar:
        return (-self) + other

    def __mul__(self, other: Scalar) -> JetScalar:
        if not isinstance(other, JetScalar):
            value = np.asarray(other, dtype=float)
            return JetScalar(_with_batch(self.coeffs, value.shape) * value, self.space)
        a, b = self._coerce(other)
        left, right, scatter = _product_table(a.nvars, a.order)
        batch = np.broadcast_shapes(a.coeffs.shape[1:], b.coeffs.shape[1:])
        products = (
            _with_batch(a.coeffs, batch)[left] * _with_batch(b.coeffs, batch)[right]
        ).reshape(len(left), -1)
        coeffs = np.asarray(scatter @ products).reshape((a.space.size, *batch))
        return JetScalar(coeffs, a.space)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> JetScalar:
        if not isinstance(other, JetScalar):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other: Scalar) -> JetScalar:
        return self.reciprocal() * other

    def __pow__(self, power: float) -> JetScalar:
        if isinstance(power, int) and power >= 0:
            result = JetScalar.constant(
                np.ones(self.coeffs.shape[1:]), self.nvars, self.order
            )
            base = self
            while power:
                if power & 1:
                    result = result * base
                power >>= 1
                if power:
                    base = base * base
            return result
        p = float(power)
        return self._compose(
            lambda u, n: _falling(p, n) * u ** (p - n) / math.factorial(n)
        )

    def _compose(self, taylor: Callable[[NDArray[np.float64], int], Any]) -> JetScalar:
        """Apply f via sum_n f^(n)(a0)/n! h^n with h = self - a0."""
        a0 = self.coeffs[0]
        h = JetScalar(self.coeffs.copy(), self.space)
        h.coeffs[0] = 0.0
        result = JetScalar.constant(taylor(a0, self.order), self.nvars, self.order)
        for n in range(self.order - 1, -1, -1):
            result = result * h + taylor(a0, n)
        return result

    def reciprocal(self) -> JetScalar:
        return self._compose(lambda u, n: (-1.0) ** n / u ** (n + 1))

    def sqrt(self) -> JetScalar:
        return self ** 0.5

    def exp(self) -> JetScalar:
        return self._compose(lambda u, n: np.exp(u) / math.factorial(n))

    def log(self) -> JetScalar:
        return self._compose(
            lambda u, n: np.log(u) if n == 0 else (-1.0) ** (n + 1) / (n * u**n)
        )

    def sin(self) -> JetScalar:
        return self._compose(
            lambda u, n: _SIN_CYCLE[n % 4](u) / math.factorial(n)
        )

    def cos(self) -> JetScalar:
        return self._compose(
            lambda u, n: _SIN_CYCLE[(n + 1) % 4](u) / math.factorial(n)
        )


_SIN_CYCLE: tuple[Callable[[Any], Any], ...] = (
    np.sin,
    np.cos,
    lambda u: -np.sin(u),
    lambda u: -np.cos(u),
)


def _with_batch(
    coeffs: NDArray[np.float64], shape: tuple[int, ...]
) -> NDArray[np.float64]:
    """View ``coeffs`` with its batch axes broadcast against ``shape``."""
    target = np.broadcast_shapes(coeffs.shape[1:], shape)
    if target == coeffs.shape[1:]:
        return coeffs
    padded = coeffs.reshape(
        (coeffs.shape[0],) + (1,) * (len(target) - coeffs.ndim + 1) + coeffs.shape[1:]
    )
    return np.broadcast_to(padded, (coeffs.shape[0], *target))


def _falling(p: float, n: int) -> float:
    return math.prod(p - k for k in range(n))


# Generic elementary functions usable on floats, arrays and jets alike.


def sqrt(u: Scalar) -> Scalar:
    return u.sqrt() if isinstance(u, JetScalar) else np.sqrt(u)


def exp(u: Scalar) -> Scalar:
    return u.exp() if isinstance(u, JetScalar) else np.exp(u)


def log(u: Scalar) -> Scalar:
    return u.log() if isinstance(u, JetScalar) else np.log(u)


def sin(u: Scalar) -> Scalar:
    return u.sin() if isinstance(u, JetScalar) else np.sin(u)


def cos(u: Scalar) -> Scalar:
    return u.cos() if isinstance(u, JetScalar) else np.cos(u)


def value_of(u: Scalar) -> Number:
    """Plain value of a jet, or the argument itself."""
    return u.value if isinstance(u, JetScalar) else u


def lift(
    f: Callable[..., Any],
    point: Sequence[ArrayLike],
    request: DerivativeRequest | None = None,
    *,
    norm_like: bool = False,
) -> Any:
    """
    Evaluate ``f`` on jet variables seeded at ``point``.

    Args:
        f: Smooth function of the declared variables (positional arguments)
        point: Base point, one value (or array of values) per variable
        request: Variable declaration and tower order
        norm_like: Reject points whose fiber part vanishes

    Returns:
        Whatever ``f`` returns, with every scalar a :class:`JetScalar`

    Raises:
        DerivativeOrderError: If the order exceeds the configured maximum
        MetricDomainError: If ``norm_like`` and the fiber vector is zero
    """
    request = request or DerivativeRequest()
    if request.order > settings.max_jet_order:
        raise DerivativeOrderError(
            f"Tower order {request.order} exceeds the configured maximum "
            f"{settings.max_jet_order}"
        )
    if len(point) != len(request.variables):
        raise ValueError(
            f"Point has {len(point)} coordinates, request declares "
            f"{len(request.variables)}"
        )
    if norm_like:
        fiber = [
            np.asarray(point[request.variables.index(name)], dtype=float)
            for name in request.fiber
        ]
        if np.any(sum(c * c for c in fiber) == 0.0):
            raise MetricDomainError("Norm-like functions are not smooth at y = 0")
    nvars = len(request.variables)
    variables = [
        JetScalar.variable(value, i, nvars, request.order)
        for i, value in enumerate(point)
    ]
    return f(*variables)


_CENTRAL_STENCILS: dict[int, tuple[tuple[int, float], ...]] = {
    0: ((0, 1.0),),
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}

_DEFAULT_FD_STEP = {1: 1e-4, 2: 1e-3, 3: 1e-2, 4: 2e-2}


def _central_difference(
    f: Callable[..., float],
    point: Sequence[float],
    alpha: Sequence[int],
    step: float,
) -> float:
    total = 0.0
    stencils = [_CENTRAL_STENCILS[a] for a in alpha]
    for combo in itertools.product(*stencils):
        weight = math.prod(w for _, w in combo)
        shifted = [p + k * step for p, (k, _) in zip(point, combo)]
        total += weight * float(f(*shifted))
    return total / step ** sum(alpha)


def fd_check(
    f: Callable[..., float],
    point: Sequence[float],
    multi_index: Sequence[int],
    step: float | None = None,
) -> float:
    """
    Central finite-difference estimate of a mixed partial (test oracle).

    Richardson extrapolation over ``step`` and ``step/2`` removes the
    leading second-order error term.

    Args:
        f: Scalar function of the coordinates
        point: Evaluation point
        multi_index: Exponent tuple, total order at most 4
        step: Base step; defaults to an order-dependent value

    Returns:
        Estimate of the partial derivative
    """
    order = sum(multi_index)
    if order > 4 or order < 0:
        raise DerivativeOrderError("fd_check supports total orders 0..4")
    if order == 0:
        return float(f(*point))
    step = step if step is not None else _DEFAULT_FD_STEP[order]
    if step <= 0:
        raise ValueError("step must be positive")
    coarse = _central_difference(f, point, multi_index, step)
    fine = _central_difference(f, point, multi_index, step / 2)
    return (4.0 * fine - coarse) / 3.0


def fd_residual(
    f: Callable[..., Any],
    point: Sequence[float],
    request: DerivativeRequest | None = None,
    *,
    norm_like: bool = False,
) -> float:
    """
    Worst relative gap between the tower partials of ``f`` at ``point`` and
    :func:`fd_check`, over every multi-index of total order 1..request.order.

    The gap is |tower - fd| / max(1, |fd|).
    """
    request = request or DerivativeRequest()
    if request.order > 4:
        raise DerivativeOrderError("fd_residual compares orders up to 4")
    jet = lift(f, [float(p) for p in point], request, norm_like=norm_like)
    worst = 0.0
    nvars = len(request.variables)
    for alpha in itertools.product(range(request.order + 1), repeat=nvars):
        if not 1 <= sum(alpha) <= request.order:
            continue
        expected = fd_check(f, point, alpha)
        gap = abs(float(jet.partial(alpha)) - expected) / max(1.0, abs(expected))
        worst = max(worst, gap)
    return worst
