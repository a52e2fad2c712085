"""Orientation-preserving circle diffeomorphisms sampled on a uniform grid."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import PchipInterpolator

from holonomy_lab.core.exceptions import ResolutionError
from holonomy_lab.models.reports import SolverSettings
from holonomy_lab.services.circle_fields import CircleVectorField, fourier_decompose
from holonomy_lab.services.ode import integrate

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
FieldLike = Union[CircleVectorField, Callable[[Array], Array]]

TWO_PI = 2.0 * np.pi
_NEWTON_ITERATIONS = 50


def circle_grid(size: int) -> Array:
    """Uniform grid t_i = 2 pi i / N."""
    return TWO_PI * np.arange(size) / size


@dataclass(frozen=True)
class CircleMap:
    """
    Degree-one circle map stored by its lift at the grid points.

    ``lift[i]`` is a real lift of phi(t_i); the lift is strictly increasing and
    phi(t + 2 pi) = phi(t) + 2 pi. Between grid points the map is evaluated by
    trigonometric interpolation of the periodic displacement phi(t) - t.
    """

    lift: Array

    def __post_init__(self) -> None:
        lift = np.asarray(self.lift, dtype=float)
        if lift.ndim != 1 or len(lift) < 4:
            raise ValueError("circle map lift must be a 1-D array of at least 4 samples")
        object.__setattr__(self, "lift", lift)

    @classmethod
    def identity(cls, size: int) -> CircleMap:
        return cls(circle_grid(size))

    @classmethod
    def rotation(cls, angle: float, size: int) -> CircleMap:
        return cls(circle_grid(size) + angle)

    @classmethod
    def from_function(cls, lift: Callable[[Array], Array], size: int) -> CircleMap:
        """Sample a lift function on the grid and validate it."""
        return cls(np.asarray(lift(circle_grid(size)), dtype=float)).validated()

    @property
    def size(self) -> int:
        return len(self.lift)

    @property
    def grid(self) -> Array:
        return circle_grid(self.size)

    def displacement(self) -> Array:
        """Samples of phi(t) - t."""
        return self.lift - self.grid

    def increments(self) -> Array:
        """Lift differences between consecutive grid points, wrap-around included."""
        return np.diff(np.append(self.lift, self.lift[0] + TWO_PI))

    def is_monotone(self) -> bool:
        return bool(np.all(self.increments() > 0.0))

    def validated(self) -> CircleMap:
        """Return self, or raise ResolutionError if the samples are not monotone."""
        if not self.is_monotone():
            raise ResolutionError()
        return self

    # -- interpolation ----------------------------------------------------

    def _spectrum(self) -> Array:
        return np.fft.rfft(self.displacement()) / self.size

    def _modes(self) -> tuple[Array, Array]:
        spectrum = self._spectrum()
        k = np.arange(len(spectrum))
        weights = np.full(len(spectrum), 2.0)
        weights[0] = 1.0
        if self.size % 2 == 0:
            weights[-1] = 1.0
        return k, weights * spectrum

    def displacement_at(self, theta: ArrayLike) -> Array:
        """Trigonometric interpolant of phi(t) - t at arbitrary angles."""
        k, coeffs = self._modes()
        phase = np.exp(1j * np.multiply.outer(np.asarray(theta, dtype=float), k))
        return (phase @ coeffs).real

    def derivative_at(self, theta: ArrayLike) -> Array:
        """phi'(theta) from the interpolant."""
        k, coeffs = self._modes()
        phase = np.exp(1j * np.multiply.outer(np.asarray(theta, dtype=float), k))
        return 1.0 + (phase @ (1j * k * coeffs)).real

    def __call__(self, theta: ArrayLike) -> Array:
        theta = np.asarray(theta, dtype=float)
        return theta + self.displacement_at(theta)

    def resample(self, size: int) -> CircleMap:
        """Resample onto another grid by periodic monotone interpolation."""
        if size == self.size:
            return self
        pad = 3
        base = self.grid
        nodes = np.concatenate([base[-pad:] - TWO_PI, base, base[:pad] + TWO_PI])
        values = np.concatenate(
            [self.lift[-pad:] - TWO_PI, self.lift, self.lift[:pad] + TWO_PI]
        )
        interpolant = PchipInterpolator(nodes, values)
        return CircleMap(interpolant(circle_grid(size)))


def _common_size(*maps: CircleMap) -> list[CircleMap]:
    size = max(m.size for m in maps)
    return [m.resample(size) for m in maps]


def circle_map_compose(phi: CircleMap, psi: CircleMap) -> CircleMap:
    """The composite phi o psi on the finer of the two grids."""
    phi, psi = _common_size(phi, psi)
    return CircleMap(phi(psi.lift)).validated()


def circle_map_distance(phi: CircleMap, psi: CircleMap) -> float:
    """
    C^0 distance of the lifts plus C^1 discrepancy of their grid increments.

    Lifts are aligned by the multiple of 2 pi that best matches them.
    """
    phi, psi = _common_size(phi, psi)
    diff = phi.lift - psi.lift
    diff -= TWO_PI * np.round(np.mean(diff) / TWO_PI)
    increments = phi.increments() - psi.increments()
    return float(np.max(np.abs(diff)) + np.max(np.abs(increments)))


def circle_map_inverse(phi: CircleMap) -> CircleMap:
    """Invert phi at the grid points by Newton iteration on the interpolant."""
    target = phi.grid
    u = target - phi.displacement_at(target)
    for _ in range(_NEWTON_ITERATIONS):
        slope = phi.derivative_at(u)
        if np.any(slope <= 0.0):
            raise ResolutionError("Interpolated circle map is not monotone")
        step = (phi(u) - target) / slope
        u = u - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return CircleMap(u).validated()


def exp_flow(
    f: FieldLike,
    s: float,
    size: int,
    solver: SolverSettings | None = None,
) -> CircleMap:
    """
    Time-s map of the flow d theta/ds = f(theta), sampled on ``size`` points.

    Each grid point is an independent row of one batched integration.
    """
    start = circle_grid(size)
    if s == 0.0:
        return CircleMap(start)
    sign = 1.0 if s > 0 else -1.0

    def rhs(t: Array, y: Array) -> Array:
        return sign * np.asarray(f(y[:, 0]), dtype=float)[:, None]

    result = integrate(rhs, (0.0, abs(s)), start[:, None], solver)
    logger.debug("exp_flow s=%g: %d steps", s, result.stats.steps)
    return CircleMap(result.y[:, 0]).validated()


def pushforward_field(h: CircleMap, f: FieldLike, nmax: int | None = None) -> CircleVectorField:
    """
    Push f forward by h: (h_* f)(theta) = h'(u) f(u) with u = h^{-1}(theta).

    The result is projected onto the modes the grid of h resolves.
    """
    u = circle_map_inverse(h).lift
    samples = h.derivative_at(u) * np.asarray(f(u), dtype=float)
    nmax = h.size // 2 - 1 if nmax is None else nmax
    return fourier_decompose(samples, nmax, warn_aliasing=False)


def conjugate_flow_check(
    h: CircleMap, f: FieldLike, s: float, solver: SolverSettings | None = None
) -> float:
    """Distance between h o exp(s f) o h^{-1} and exp(s h_* f)."""
    size = h.size
    inverse = circle_map_inverse(h)
    conjugated = circle_map_compose(h, circle_map_compose(exp_flow(f, s, size, solver), inverse))
    pushed = exp_flow(pushforward_field(h, f), s, size, solver)
    return circle_map_distance(conjugated, pushed)
