"""Tests for the batched integrators."""

import math

import numpy as np
import pytest

from holonomy_lab.core.exceptions import IntegrationError
from holonomy_lab.models.reports import SolverSettings
from holonomy_lab.services.ode import dopri5, integrate, rk4


def decay(t, y):
    return -y


def oscillator(t, y):
    return np.column_stack([y[:, 1], -y[:, 0]])


def test_dopri5_exponential_decay():
    y0 = np.array([[1.0], [2.0], [-3.0]])
    result = dopri5(decay, (0.0, 2.0), y0, SolverSettings(rtol=1e-12, atol=1e-12))
    np.testing.assert_allclose(result.y, y0 * math.exp(-2.0), rtol=1e-10)
    np.testing.assert_allclose(result.t, 2.0)
    assert result.stats.steps > 0
    assert not result.stopped.any()


def test_dopri5_oscillator_conserves_energy():
    theta = np.linspace(0.0, 2 * math.pi, 16, endpoint=False)
    y0 = np.column_stack([np.cos(theta), np.sin(theta)])
    result = dopri5(oscillator, (0.0, 10.0), y0)
    energy = np.sum(result.y**2, axis=1)
    np.testing.assert_allclose(energy, 1.0, atol=1e-8)
    np.testing.assert_allclose(result.y[:, 0], np.cos(theta + 10.0), atol=1e-8)


def test_rk4_fourth_order():
    y0 = np.array([[1.0]])
    errors = [
        abs(rk4(decay, (0.0, 1.0), y0, steps).y[0, 0] - math.exp(-1.0)) for steps in (10, 20)
    ]
    assert errors[0] / errors[1] == pytest.approx(16.0, rel=0.1)


def test_integrate_dispatches_on_method():
    y0 = np.array([[1.0]])
    result = integrate(decay, (0.0, 1.0), y0, SolverSettings(method="rk4", rk4_steps=200))
    assert result.stats.rejected == 0
    assert result.y[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-9)


def test_event_halts_only_flagged_rows():
    def moving(t, y):
        return np.ones_like(y)

    def beyond_one(t, y):
        return y[:, 0] > 1.0

    y0 = np.array([[0.0], [-5.0]])
    result = dopri5(moving, (0.0, 2.0), y0, event=beyond_one)
    assert result.stopped.tolist() == [True, False]
    assert result.y[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert result.y[1, 0] == pytest.approx(-3.0)


def test_rk4_event_halts_only_flagged_rows():
    def moving(t, y):
        return np.ones_like(y)

    def beyond_one(t, y):
        return y[:, 0] > 1.0

    y0 = np.array([[0.0], [-5.0]])
    result = rk4(moving, (0.0, 2.0), y0, 200, event=beyond_one)
    assert result.stopped.tolist() == [True, False]
    assert result.y[0, 0] == pytest.approx(1.0, abs=0.011)
    assert result.event_time[0] == pytest.approx(1.0, abs=0.011)
    assert result.y[1, 0] == pytest.approx(-3.0)


def test_rk4_stops_rows_that_blow_up():
    def pole(t, y):
        return y**2

    result = rk4(pole, (0.0, 2.0), np.array([[1.0], [-1.0]]), 400)
    assert result.stopped.tolist() == [True, False]
    assert np.all(np.isfinite(result.y))
    assert 0.9 < result.event_time[0] < 2.0


def test_observer_sees_every_accepted_step():
    seen = []

    def observe(t, y, rows):
        seen.append(len(rows))

    result = dopri5(decay, (0.0, 1.0), np.ones((3, 1)), observer=observe)
    assert sum(seen) == result.stats.steps


def test_max_steps_exceeded():
    with pytest.raises(IntegrationError):
        dopri5(oscillator, (0.0, 100.0), np.array([[1.0, 0.0]]), SolverSettings(max_steps=3))


def test_rejects_flat_initial_state():
    with pytest.raises(ValueError):
        dopri5(decay, (0.0, 1.0), np.ones(3))
