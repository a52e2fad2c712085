"""Tests for truncated Fourier fields, brackets and closure."""

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from holonomy_lab.models.reports import FieldPayload
from holonomy_lab.services.circle_fields import (
    CircleVectorField,
    bracket_closure,
    bracket_with_loss,
    five_generators,
    fourier_decompose,
    lie_bracket,
)

GRID64 = 2 * np.pi * np.arange(64) / 64

coefficients = arrays(
    np.float64, 17, elements=st.floats(min_value=-1.0, max_value=1.0)
)


def degree_field(vector, degree, nmax):
    """Field of the given degree from the leading entries of a coefficient vector."""
    cos = np.zeros(nmax)
    sin = np.zeros(nmax)
    cos[:degree] = vector[1 : degree + 1]
    sin[:degree] = vector[degree + 1 : 2 * degree + 1]
    return CircleVectorField(vector[0], cos, sin)


def test_decompose_single_mode():
    field = fourier_decompose(np.cos(3 * GRID64), 8)
    expected = CircleVectorField.cos_mode(3, 8)
    np.testing.assert_allclose(field.vector(), expected.vector(), atol=1e-12)


def test_decompose_constant_plus_sine():
    field = fourier_decompose(2.0 + np.sin(GRID64), 8)
    assert field.a0 == pytest.approx(2.0, abs=1e-12)
    assert field.sin[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(field.cos)) <= 1e-12


def test_decompose_needs_enough_samples():
    with pytest.raises(ValueError):
        fourier_decompose(np.zeros(16), 8)


def test_aliasing_warning(caplog):
    logger = logging.getLogger("holonomy_lab")
    logger.addHandler(caplog.handler)
    try:
        with caplog.at_level(logging.WARNING, logger="holonomy_lab"):
            fourier_decompose(np.cos(8 * GRID64), 8)
    finally:
        logger.removeHandler(caplog.handler)
    assert "aliasing" in caplog.text


@given(vector=coefficients)
@settings(max_examples=40, deadline=None)
def test_parseval(vector):
    field = CircleVectorField.from_vector(vector)
    samples = field(GRID64)
    assert field.mean_square() == pytest.approx(np.mean(samples**2), abs=1e-10)


@given(vector=coefficients)
@settings(max_examples=40, deadline=None)
def test_sampling_then_decomposing_recovers_field(vector):
    field = CircleVectorField.from_vector(vector)
    recovered = fourier_decompose(field(GRID64), 8, warn_aliasing=False)
    np.testing.assert_allclose(recovered.vector(), field.vector(), atol=1e-12)


def test_derivative_of_modes():
    field = CircleVectorField.cos_mode(2, 4, scale=3.0)
    derivative = field.derivative()
    assert derivative.sin[1] == pytest.approx(-6.0)
    assert np.count_nonzero(derivative.vector()) == 1


def test_payload_shape():
    payload = CircleVectorField.sin_mode(1, 3).to_payload()
    expected = FieldPayload(nmax=3, a0=0.0, cos=[0.0] * 3, sin=[1.0, 0.0, 0.0])
    assert payload == expected
    assert CircleVectorField.from_payload(payload).sin[0] == 1.0


def test_resize_and_alignment():
    small = CircleVectorField.cos_mode(1, 2)
    large = CircleVectorField.sin_mode(5, 6)
    total = small + large
    assert total.nmax == 6
    assert total.cos[0] == 1.0
    assert total.sin[4] == 1.0
    assert large.resize(3).degree == 0


def test_bracket_constant_with_cosine():
    nmax = 4
    bracket = lie_bracket(
        CircleVectorField.constant(1.0, nmax), CircleVectorField.cos_mode(1, nmax)
    )
    expected = CircleVectorField.sin_mode(1, nmax)
    np.testing.assert_allclose(bracket.vector(), expected.vector(), atol=1e-14)


def test_bracket_cosine_with_sine():
    nmax = 4
    bracket = lie_bracket(
        CircleVectorField.cos_mode(1, nmax), CircleVectorField.sin_mode(1, nmax)
    )
    expected = CircleVectorField.constant(-1.0, nmax)
    np.testing.assert_allclose(bracket.vector(), expected.vector(), atol=1e-14)


def test_bracket_truncation_loss():
    nmax = 2
    cos1, cos2 = CircleVectorField.cos_mode(1, nmax), CircleVectorField.cos_mode(2, nmax)
    field, loss = bracket_with_loss(cos2, CircleVectorField.sin_mode(2, nmax), nmax)
    assert field.nmax == nmax
    assert loss == pytest.approx(0.0, abs=1e-14)
    _, loss = bracket_with_loss(cos1, cos2, nmax)
    assert loss > 0.0


@given(f=coefficients, g=coefficients)
@settings(max_examples=50, deadline=None)
def test_bracket_antisymmetry(f, g):
    a = CircleVectorField.from_vector(f)
    b = CircleVectorField.from_vector(g)
    total = lie_bracket(a, b, 16) + lie_bracket(b, a, 16)
    assert np.max(np.abs(total.vector())) <= 1e-10
    assert np.max(np.abs(lie_bracket(a, a, 16).vector())) <= 1e-10


@given(f=coefficients, g=coefficients, h=coefficients)
@settings(max_examples=30, deadline=None)
def test_jacobi_identity(f, g, h):
    a, b, c = (degree_field(0.5 * v, 4, 12) for v in (f, g, h))
    jacobi = (
        lie_bracket(a, lie_bracket(b, c))
        + lie_bracket(b, lie_bracket(c, a))
        + lie_bracket(c, lie_bracket(a, b))
    )
    assert jacobi.sup_norm() <= 1e-10


def test_closure_of_constant_field_is_abelian():
    result = bracket_closure([CircleVectorField.constant(1.0, 4)], 4)
    assert result.dimensions == [1, 1]
    assert result.converged


@pytest.mark.parametrize("nmax", [3, 5, 8])
def test_five_generators_reach_full_dimension(nmax):
    result = bracket_closure(five_generators(nmax), nmax, max_depth=8)
    assert result.dimension == 2 * nmax + 1
    assert result.converged
    assert result.dimensions[0] == 5


def test_closure_basis_is_orthonormal():
    result = bracket_closure(five_generators(4), 4)
    matrix = np.array([field.vector() for field in result.basis])
    np.testing.assert_allclose(matrix @ matrix.T, np.eye(len(matrix)), atol=1e-10)


def test_closure_needs_two_modes():
    with pytest.raises(ValueError):
        bracket_closure(five_generators(2), 1)
