"""Tests for sampled circle diffeomorphisms and field flows."""

import math

import numpy as np
import pytest

from holonomy_lab.cli.commands import sin_flow_closed_form
from holonomy_lab.core.exceptions import ResolutionError
from holonomy_lab.models.reports import SolverSettings
from holonomy_lab.services.circle_fields import CircleVectorField
from holonomy_lab.services.circle_maps import (
    CircleMap,
    circle_grid,
    circle_map_compose,
    circle_map_distance,
    circle_map_inverse,
    conjugate_flow_check,
    exp_flow,
    pushforward_field,
)

SIZE = 128
TIGHT = SolverSettings(rtol=1e-12, atol=1e-12)


@pytest.fixture
def smooth_field():
    return CircleVectorField(0.2, np.array([0.3, -0.1, 0.05]), np.array([0.1, 0.2, 0.0]))


def test_identity_is_neutral():
    phi = CircleMap.from_function(lambda t: t + 0.3 * np.sin(t), SIZE)
    composed = circle_map_compose(CircleMap.identity(SIZE), phi)
    np.testing.assert_array_equal(composed.lift, phi.lift)


def test_rotations_compose():
    first, second = CircleMap.rotation(0.4, SIZE), CircleMap.rotation(1.1, SIZE)
    composed = circle_map_compose(first, second)
    np.testing.assert_allclose(composed.lift, CircleMap.rotation(1.5, SIZE).lift, atol=1e-12)


def test_non_monotone_lift_rejected():
    lift = circle_grid(16)
    lift[3], lift[4] = lift[4], lift[3]
    with pytest.raises(ResolutionError):
        CircleMap(lift).validated()


def test_distance_ignores_full_turns():
    phi = CircleMap.rotation(0.25, SIZE)
    shifted = CircleMap(phi.lift + 2 * math.pi)
    assert circle_map_distance(phi, shifted) == pytest.approx(0.0, abs=1e-12)
    assert circle_map_distance(phi, CircleMap.identity(SIZE)) == pytest.approx(0.25)


def test_interpolation_is_spectral():
    phi = CircleMap.from_function(lambda t: t + 0.2 * np.sin(2 * t) + 0.1, 64)
    theta = np.linspace(0.0, 2 * math.pi, 17)
    expected = theta + 0.2 * np.sin(2 * theta) + 0.1
    np.testing.assert_allclose(phi(theta), expected, atol=1e-13)
    slope = 1 + 0.4 * np.cos(2 * theta)
    np.testing.assert_allclose(phi.derivative_at(theta), slope, atol=1e-12)


def test_resample_keeps_the_map():
    phi = CircleMap.from_function(lambda t: t + 0.1 * np.sin(t), 64)
    finer = phi.resample(256)
    assert finer.size == 256
    assert finer.is_monotone()
    np.testing.assert_allclose(finer.lift, phi(finer.grid), atol=5e-4)


def test_inverse():
    phi = CircleMap.from_function(lambda t: t + 0.3 * np.sin(t) + 0.5, SIZE)
    inverse = circle_map_inverse(phi)
    composed = circle_map_compose(phi, inverse)
    assert circle_map_distance(composed, CircleMap.identity(SIZE)) <= 1e-10


def test_zero_field_and_zero_time_give_identity():
    identity = CircleMap.identity(SIZE)
    still = exp_flow(CircleVectorField.zero(4), 1.0, SIZE)
    instant = exp_flow(CircleVectorField.cos_mode(1, 4), 0.0, SIZE)
    assert circle_map_distance(still, identity) == 0.0
    assert circle_map_distance(instant, identity) == 0.0


def test_constant_field_rotates():
    flow = exp_flow(CircleVectorField.constant(0.7, 4), 2.0, SIZE, TIGHT)
    np.testing.assert_allclose(flow.lift, CircleMap.rotation(1.4, SIZE).lift, atol=1e-10)


def test_sine_flow_closed_form():
    flow = exp_flow(CircleVectorField.sin_mode(1, 4), 1.0, 256, TIGHT)
    expected = sin_flow_closed_form(circle_grid(256), 1.0)
    assert np.max(np.abs(flow.lift - expected)) <= 1e-8


def test_callable_fields_flow():
    flow = exp_flow(np.sin, 1.0, SIZE, TIGHT)
    expected = sin_flow_closed_form(circle_grid(SIZE), 1.0)
    assert np.max(np.abs(flow.lift - expected)) <= 1e-8


def test_one_parameter_group(smooth_field):
    full = exp_flow(smooth_field, 1.0, SIZE, TIGHT)
    half = exp_flow(smooth_field, 0.5, SIZE, TIGHT)
    assert circle_map_distance(full, circle_map_compose(half, half)) <= 1e-8


def test_backward_flow_inverts(smooth_field):
    forward = exp_flow(smooth_field, 0.8, SIZE, TIGHT)
    backward = exp_flow(smooth_field, -0.8, SIZE, TIGHT)
    identity = CircleMap.identity(SIZE)
    assert circle_map_distance(circle_map_compose(forward, backward), identity) <= 1e-8
    assert circle_map_distance(circle_map_inverse(forward), backward) <= 1e-8


def test_pushforward_by_rotation():
    alpha = 0.6
    rotation = CircleMap.rotation(alpha, 64)
    pushed = pushforward_field(rotation, CircleVectorField.cos_mode(1, 4), nmax=4)
    assert pushed.cos[0] == pytest.approx(math.cos(alpha), abs=1e-12)
    assert pushed.sin[0] == pytest.approx(math.sin(alpha), abs=1e-12)


def test_conjugation_invariance(smooth_field):
    h = exp_flow(CircleVectorField.sin_mode(2, 4, scale=0.2), 0.5, SIZE, TIGHT)
    assert conjugate_flow_check(h, smooth_field, 0.7, TIGHT) <= 1e-6
