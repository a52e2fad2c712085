"""Vector fields f(t) d/dt on the circle as truncated Fourier series."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from holonomy_lab.core.config import settings
from holonomy_lab.models.reports import FieldPayload

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class CircleVectorField:
    """
    f(t) d/dt with f(t) = a0 + sum_n (a_n cos nt + b_n sin nt), n = 1..nmax.

    ``cos[n-1]`` holds a_n and ``sin[n-1]`` holds b_n.
    """

    a0: float
    cos: Array
    sin: Array

    def __post_init__(self) -> None:
        cos = np.asarray(self.cos, dtype=float)
        sin = np.asarray(self.sin, dtype=float)
        if cos.shape != sin.shape or cos.ndim != 1:
            raise ValueError("cos and sin coefficient arrays must match")
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "cos", cos)
        object.__setattr__(self, "sin", sin)

    # -- construction -----------------------------------------------------

    @classmethod
    def zero(cls, nmax: int) -> CircleVectorField:
        return cls(0.0, np.zeros(nmax), np.zeros(nmax))

    @classmethod
    def constant(cls, value: float, nmax: int) -> CircleVectorField:
        return cls(value, np.zeros(nmax), np.zeros(nmax))

    @classmethod
    def cos_mode(cls, n: int, nmax: int, scale: float = 1.0) -> CircleVectorField:
        if n == 0:
            return cls.constant(scale, nmax)
        field = cls.zero(nmax)
        field.cos[n - 1] = scale
        return field

    @classmethod
    def sin_mode(cls, n: int, nmax: int, scale: float = 1.0) -> CircleVectorField:
        field = cls.zero(nmax)
        field.sin[n - 1] = scale
        return field

    @classmethod
    def from_vector(cls, vector: ArrayLike) -> CircleVectorField:
        """Inverse of :meth:`vector`."""
        v = np.asarray(vector, dtype=float)
        nmax = (len(v) - 1) // 2
        return cls(v[0], v[1 : nmax + 1], v[nmax + 1 :])

    @classmethod
    def from_payload(cls, payload: FieldPayload) -> CircleVectorField:
        return cls(payload.a0, np.asarray(payload.cos), np.asarray(payload.sin))

    # -- inspection -------------------------------------------------------

    @property
    def nmax(self) -> int:
        return len(self.cos)

    @property
    def degree(self) -> int:
        nonzero = np.flatnonzero((self.cos != 0) | (self.sin != 0))
        return int(nonzero[-1] + 1) if len(nonzero) else 0

    def vector(self) -> Array:
        """Coefficients as (a0, a_1..a_nmax, b_1..b_nmax)."""
        return np.concatenate([[self.a0], self.cos, self.sin])

    def __call__(self, t: ArrayLike) -> Array:
        t = np.asarray(t, dtype=float)
        n = np.arange(1, self.nmax + 1)
        phase = np.multiply.outer(t, n)
        return self.a0 + np.cos(phase) @ self.cos + np.sin(phase) @ self.sin

    def derivative(self) -> CircleVectorField:
        """Coefficients of f'(t)."""
        n = np.arange(1, self.nmax + 1)
        return CircleVectorField(0.0, n * self.sin, -n * self.cos)

    def mean_square(self) -> float:
        """Mean of f^2 over the circle (Parseval)."""
        return float(self.a0**2 + 0.5 * np.sum(self.cos**2 + self.sin**2))

    def sup_norm(self, samples: int = 1024) -> float:
        grid = 2 * np.pi * np.arange(samples) / samples
        return float(np.max(np.abs(self(grid))))

    def resize(self, nmax: int) -> CircleVectorField:
        """Pad with zeros or truncate to ``nmax`` modes."""
        cos = np.zeros(nmax)
        sin = np.zeros(nmax)
        keep = min(nmax, self.nmax)
        cos[:keep] = self.cos[:keep]
        sin[:keep] = self.sin[:keep]
        return CircleVectorField(self.a0, cos, sin)

    def to_payload(self) -> FieldPayload:
        return FieldPayload(
            nmax=self.nmax, a0=self.a0, cos=self.cos.tolist(), sin=self.sin.tolist()
        )

    # -- linear structure -------------------------------------------------

    def _aligned(self, other: CircleVectorField) -> tuple[CircleVectorField, CircleVectorField]:
        nmax = max(self.nmax, other.nmax)
        return self.resize(nmax), other.resize(nmax)

    def __add__(self, other: CircleVectorField) -> CircleVectorField:
        a, b = self._aligned(other)
        return CircleVectorField(a.a0 + b.a0, a.cos + b.cos, a.sin + b.sin)

    def __sub__(self, other: CircleVectorField) -> CircleVectorField:
        return self + (-other)

    def __neg__(self) -> CircleVectorField:
        return CircleVectorField(-self.a0, -self.cos, -self.sin)

    def __mul__(self, scale: float) -> CircleVectorField:
        return CircleVectorField(self.a0 * scale, self.cos * scale, self.sin * scale)

    __rmul__ = __mul__

    def distance(self, other: CircleVectorField) -> float:
        """Sup norm of the difference, sampled finely enough to resolve both."""
        a, b = self._aligned(other)
        return (a - b).sup_norm(max(1024, 8 * a.nmax))


def fourier_decompose(
    samples: ArrayLike, nmax: int | None = None, *, warn_aliasing: bool = True
) -> CircleVectorField:
    """
    Discrete Fourier projection of samples at t_i = 2 pi i / N.

    Exact for trigonometric polynomials of degree <= nmax when N > 2 nmax.

    Args:
        samples: Values f(t_i), i = 0..N-1
        nmax: Truncation order; defaults to the configured order
        warn_aliasing: Log a warning when the top mode carries more than the
            configured fraction of the energy

    Returns:
        Field with coefficients a0, a_n, b_n for n <= nmax
    """
    values = np.asarray(samples, dtype=float)
    size = len(values)
    nmax = settings.nmax if nmax is None else nmax
    if size <= 2 * nmax:
        raise ValueError(f"Grid of {size} points cannot resolve {nmax} modes")
    spectrum = np.fft.rfft(values) / size
    a0 = float(spectrum[0].real)
    cos = 2.0 * spectrum[1 : nmax + 1].real
    sin = -2.0 * spectrum[1 : nmax + 1].imag
    field = CircleVectorField(a0, cos, sin)
    if warn_aliasing and nmax >= 1:
        total = field.mean_square()
        top = 0.5 * (cos[-1] ** 2 + sin[-1] ** 2)
        if total > 0 and top > settings.aliasing_fraction * total:
            logger.warning(
                "Possible aliasing: top mode %d carries %.2f%% of the energy",
                nmax,
                100.0 * top / total,
            )
    return field


def _product_grid(degree: int) -> Array:
    size = 2 * degree + 2
    return 2 * np.pi * np.arange(size) / size


def bracket_with_loss(
    f: CircleVectorField, g: CircleVectorField, nmax: int | None = None
) -> tuple[CircleVectorField, float]:
    """
    Bracket [f d/dt, g d/dt] = (g f' - g' f) d/dt and the truncated energy.

    This is the negative of the usual vector-field bracket: it is the Lie
    algebra bracket of the diffeomorphism group.

    Returns:
        The bracket truncated to ``nmax`` modes and the mean-square energy of
        the modes dropped by the truncation
    """
    nmax = max(f.nmax, g.nmax) if nmax is None else nmax
    degree = f.nmax + g.nmax
    grid = _product_grid(degree)
    values = g(grid) * f.derivative()(grid) - g.derivative()(grid) * f(grid)
    full = fourier_decompose(values, degree, warn_aliasing=False)
    truncated = full.resize(nmax)
    loss = full.mean_square() - truncated.mean_square()
    return truncated, max(loss, 0.0)


def lie_bracket(
    f: CircleVectorField, g: CircleVectorField, nmax: int | None = None
) -> CircleVectorField:
    """Bracket (g f' - g' f) d/dt, truncated to ``nmax`` modes."""
    bracket, loss = bracket_with_loss(f, g, nmax)
    if loss > 0.0:
        logger.debug("Bracket truncation dropped energy %.3e", loss)
    return bracket


def five_generators(nmax: int) -> list[CircleVectorField]:
    """The five fields d/dt, cos t, sin t, cos 2t, sin 2t (times d/dt)."""
    return [
        CircleVectorField.constant(1.0, nmax),
        CircleVectorField.cos_mode(1, nmax),
        CircleVectorField.sin_mode(1, nmax),
        CircleVectorField.cos_mode(2, nmax),
        CircleVectorField.sin_mode(2, nmax),
    ]


@dataclass(frozen=True)
class ClosureResult:
    """Dimension growth of a bracket closure."""

    dimensions: list[int]
    basis: list[CircleVectorField]
    converged: bool

    @property
    def dimension(self) -> int:
        return self.dimensions[-1] if self.dimensions else 0


def _orthonormal_extend(
    basis: list[Array], candidates: Sequence[Array], tol: float
) -> list[Array]:
    """Modified Gram-Schmidt in candidate order, applied twice per vector."""
    added: list[Array] = []
    for candidate in candidates:
        norm0 = float(np.linalg.norm(candidate))
        if norm0 == 0.0:
            continue
        v = candidate.copy()
        for _ in range(2):
            for q in basis + added:
                v -= (q @ v) * q
        norm = float(np.linalg.norm(v))
        if norm > tol * max(norm0, 1.0):
            added.append(v / norm)
    return added


def bracket_closure(
    generators: Sequence[CircleVectorField],
    nmax: int,
    max_depth: int = 8,
    tol: float = 1e-9,
) -> ClosureResult:
    """
    Grow the span of iterated brackets with the generators, truncated at ``nmax``.

    Depth 0 is the span of the generators; depth d adds the brackets of the
    vectors found at depth d-1 with every generator.

    Returns:
        Dimension per depth, an orthonormal coefficient basis, and whether the
        span stopped growing within ``max_depth``
    """
    if nmax < 2:
        raise ValueError("bracket closure needs nmax >= 2")
    gens = [g.resize(nmax) for g in generators]
    basis = _orthonormal_extend([], [g.vector() for g in gens], tol)
    dimensions = [len(basis)]
    frontier = list(basis)
    converged = False
    for depth in range(1, max_depth + 1):
        candidates = [
            lie_bracket(CircleVectorField.from_vector(v), g, nmax).vector()
            for v in frontier
            for g in gens
        ]
        added = _orthonormal_extend(basis, candidates, tol)
        basis.extend(added)
        dimensions.append(len(basis))
        logger.debug("Closure depth %d: dimension %d", depth, len(basis))
        if not added:
            converged = True
            break
        frontier = added
    return ClosureResult(
        dimensions=dimensions,
        basis=[CircleVectorField.from_vector(v) for v in basis],
        converged=converged,
    )
