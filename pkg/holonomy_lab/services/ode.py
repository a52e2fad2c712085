"""Explicit Runge-Kutta integrators for batches of independent ODEs.

Right-hand sides are evaluated for all active rows in one vectorised call,
but every row keeps its own time, step size and error control, so rows are
integrated exactly as if they had been solved one at a time.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from holonomy_lab.core.exceptions import IntegrationError
from holonomy_lab.models.reports import SolverSettings, TransportStats

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
RightHandSide = Callable[[Array, Array], Array]
Observer = Callable[[Array, Array, NDArray[np.intp]], None]
Event = Callable[[Array, Array], NDArray[np.bool_]]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_MIN_STEP = 1e-14


@dataclass
class IntegrationResult:
    """Final states of a batch integration."""

    y: Array
    t: Array
    stats: TransportStats = field(default_factory=TransportStats)
    event_time: Array | None = None

    @property
    def stopped(self) -> NDArray[np.bool_]:
        """Rows halted by the event before the final time."""
        if self.event_time is None:
            return np.zeros(len(self.t), dtype=bool)
        return ~np.isnan(self.event_time)


def _error_norm(err: Array, y: Array, y_new: Array, settings: SolverSettings) -> Array:
    scale = settings.atol + settings.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return np.sqrt(np.mean((err / scale) ** 2, axis=1))


def _initial_step(
    rhs: RightHandSide, t0: float, y0: Array, span: float, settings: SolverSettings
) -> Array:
    scale = settings.atol + settings.rtol * np.abs(y0)
    f0 = rhs(np.full(len(y0), t0), y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
    h0 = np.where(np.isfinite(h0), h0, 1e-6)
    return np.minimum(h0, span)


def dopri5(
    rhs: RightHandSide,
    t_span: tuple[float, float],
    y0: Array,
    settings: SolverSettings | None = None,
    *,
    event: Event | None = None,
    observer: Observer | None = None,
) -> IntegrationResult:
    """
    Integrate y' = rhs(t, y) for a batch of initial values with Dormand-Prince 5(4).

    Args:
        rhs: Vectorised right-hand side taking times (rows,) and states (rows, dim)
        t_span: Start and end time, end > start
        y0: Initial states (rows, dim)
        settings: Tolerances and step limits
        event: Predicate flagging states where a row must stop (e.g. outside
            the domain); the row is halted just before the first flagged state
        observer: Called with (t, y, row indices) after every accepted step

    Returns:
        Final times and states with solver statistics

    Raises:
        IntegrationError: On step-size underflow or when max_steps is exceeded
    """
    settings = settings or SolverSettings()
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(y0, dtype=float, copy=True)
    if y.ndim != 2:
        raise ValueError("initial states must have shape (rows, dim)")
    rows = len(y)
    t = np.full(rows, t0)
    event_time = np.full(rows, np.nan)
    stats = TransportStats()
    span = t1 - t0
    if span <= 0 or rows == 0:
        return IntegrationResult(y=y, t=t, stats=stats, event_time=event_time)

    h = _initial_step(rhs, t0, y, span, settings)
    stats.evaluations += rows
    active = np.ones(rows, dtype=bool)
    iterations = 0
    while np.any(active):
        iterations += 1
        if iterations > settings.max_steps:
            raise IntegrationError(
                f"Maximum number of steps ({settings.max_steps}) exceeded"
            )
        idx = np.flatnonzero(active)
        ti, yi = t[idx], y[idx]
        hi = np.minimum(h[idx], t1 - ti)
        k = np.empty((7, len(idx), y.shape[1]))
        with np.errstate(invalid="ignore", over="ignore"):
            k[0] = rhs(ti, yi)
            for s in range(1, 7):
                stage = yi + hi[:, None] * np.tensordot(_A[s], k[:s], axes=(0, 0))
                k[s] = rhs(ti + _C[s] * hi, stage)
            y_new = yi + hi[:, None] * np.tensordot(_B5, k, axes=(0, 0))
            err = _error_norm(
                hi[:, None] * np.tensordot(_E, k, axes=(0, 0)), yi, y_new, settings
            )
        stats.evaluations += 7 * len(idx)

        finite = np.isfinite(err) & np.all(np.isfinite(y_new), axis=1)
        accept = finite & (err <= 1.0)
        if event is not None:
            outside = np.zeros(len(idx), dtype=bool)
            outside[accept] = event(ti[accept] + hi[accept], y_new[accept])
            accept &= ~outside
        else:
            outside = np.zeros(len(idx), dtype=bool)

        with np.errstate(divide="ignore"):
            factor = np.where(
                finite & (err > 0),
                np.clip(_SAFETY * err ** (-0.2), _MIN_FACTOR, _MAX_FACTOR),
                np.where(finite, _MAX_FACTOR, _MIN_FACTOR),
            )
        factor = np.where(outside, 0.5, factor)
        if not np.all(accept):
            # no growth right after a rejection
            factor = np.where(accept, factor, np.minimum(factor, 1.0))

        accepted_idx = idx[accept]
        t[accepted_idx] = ti[accept] + hi[accept]
        y[accepted_idx] = y_new[accept]
        h[idx] = hi * factor
        stats.steps += int(np.sum(accept))
        stats.rejected += int(np.sum(~accept))
        if observer is not None and len(accepted_idx):
            observer(t[accepted_idx], y[accepted_idx], accepted_idx)

        done = t[idx] >= t1 - 1e-15 * max(1.0, abs(t1))
        tiny = h[idx] < _MIN_STEP * max(1.0, abs(t1))
        halted = tiny & (outside | ~finite) & ~done
        if np.any(halted):
            event_time[idx[halted]] = t[idx[halted]]
        failed = tiny & ~halted & ~done
        if np.any(failed):
            raise IntegrationError(
                f"Step-size underflow at t={float(np.min(t[idx[failed]])):.6g}"
            )
        active[idx[done | halted]] = False

    logger.debug(
        "dopri5: rows=%d steps=%d rejected=%d evaluations=%d",
        rows,
        stats.steps,
        stats.rejected,
        stats.evaluations,
    )
    return IntegrationResult(y=y, t=t, stats=stats, event_time=event_time)


def rk4(
    rhs: RightHandSide,
    t_span: tuple[float, float],
    y0: Array,
    steps: int,
    *,
    event: Event | None = None,
    observer: Observer | None = None,
) -> IntegrationResult:
    """
    Classical fixed-step fourth-order Runge-Kutta for a batch of rows.

    A row whose next state is flagged by ``event`` or is not finite stops at
    its last good state, and that time is recorded as its event time.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(y0, dtype=float, copy=True)
    rows = len(y)
    event_time = np.full(rows, np.nan)
    t = np.full(rows, t0)
    active = np.ones(rows, dtype=bool)
    h = (t1 - t0) / steps
    taken = 0
    for n in range(steps):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        yi = y[idx]
        tv = t[idx]
        with np.errstate(invalid="ignore", over="ignore"):
            k1 = rhs(tv, yi)
            k2 = rhs(tv + h / 2, yi + h / 2 * k1)
            k3 = rhs(tv + h / 2, yi + h / 2 * k2)
            k4 = rhs(tv + h, yi + h * k3)
            y_new = yi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        bad = ~np.all(np.isfinite(y_new), axis=1)
        if event is not None:
            bad[~bad] = event(tv[~bad] + h, y_new[~bad])
        good = idx[~bad]
        y[good] = y_new[~bad]
        t[good] = t0 + (n + 1) * h
        taken += len(good)
        if np.any(bad):
            event_time[idx[bad]] = tv[bad]
            active[idx[bad]] = False
        if observer is not None and len(good):
            observer(t[good], y[good], good)
    stats = TransportStats(steps=taken, rejected=0, evaluations=4 * taken)
    return IntegrationResult(y=y, t=t, stats=stats, event_time=event_time)


def integrate(
    rhs: RightHandSide,
    t_span: tuple[float, float],
    y0: Array,
    settings: SolverSettings | None = None,
    *,
    event: Event | None = None,
    observer: Observer | None = None,
) -> IntegrationResult:
    """Dispatch to the integrator named in ``settings.method``."""
    settings = settings or SolverSettings()
    if settings.method == "rk4":
        return rk4(rhs, t_span, y0, settings.rk4_steps, event=event, observer=observer)
    return dopri5(rhs, t_span, y0, settings, event=event, observer=observer)
