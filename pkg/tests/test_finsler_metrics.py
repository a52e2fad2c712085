"""Tests for the metric catalog."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holonomy_lab.core.exceptions import MetricDomainError, SpecParseError
from holonomy_lab.services.finsler_metrics import (
    BryantShenMetric,
    EuclideanMetric,
    FunkMetric,
    bryant_shen_origin,
    funk_norm,
    funk_projective_factor,
    parse_metric,
    projective_factor_from_norm,
)

interior = st.tuples(
    st.floats(min_value=-0.6, max_value=0.6), st.floats(min_value=-0.6, max_value=0.6)
)
directions = st.floats(min_value=0.0, max_value=2 * math.pi)


@pytest.mark.parametrize(
    ("sign", "x", "y", "expected"),
    [
        (1, (0.0, 0.0), (1.0, 0.0), 1.0),
        (1, (0.5, 0.0), (1.0, 0.0), 2.0),
        (-1, (0.5, 0.0), (1.0, 0.0), 2.0 / 3.0),
    ],
)
def test_funk_norm_values(sign, x, y, expected):
    assert funk_norm(sign, x, y) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    ("sign", "x", "y", "expected"),
    [
        (1, (0.0, 0.0), (1.0, 0.0), 0.5),
        (1, (0.5, 0.0), (1.0, 0.0), 1.0),
        (-1, (0.0, 0.0), (0.0, 2.0), -1.0),
    ],
)
def test_funk_projective_factor_values(sign, x, y, expected):
    assert funk_projective_factor(sign, x, y) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    ("alpha", "y", "expected"),
    [
        (0.0, (1.0, 0.0), (1.0, 0.0)),
        (math.pi / 4, (1.0, 0.0), (math.sqrt(2) / 2, math.sqrt(2) / 2)),
        (math.pi / 6, (0.0, 2.0), (math.sqrt(3), 1.0)),
    ],
)
def test_bryant_shen_origin_values(alpha, y, expected):
    F, P = bryant_shen_origin(alpha, y)
    assert (F, P) == pytest.approx(expected, rel=1e-14, abs=1e-15)


def test_funk_rejects_boundary_and_outside():
    with pytest.raises(MetricDomainError):
        funk_norm(1, (1.0, 0.0), (1.0, 0.0))
    with pytest.raises(MetricDomainError):
        funk_norm(-1, (0.8, 0.8), (1.0, 0.0))


def test_zero_fiber_rejected(funk_plus, euclid):
    with pytest.raises(MetricDomainError):
        funk_plus.norm((0.0, 0.0), (0.0, 0.0))
    with pytest.raises(MetricDomainError):
        euclid.norm((0.0, 0.0), (0.0, 0.0))


def test_bryant_shen_only_at_origin(bryant):
    assert bryant.contains((0.0, 0.0))
    assert not bryant.contains((0.1, 0.0))
    with pytest.raises(MetricDomainError):
        bryant.norm((0.1, 0.0), (1.0, 0.0))


def test_bryant_shen_alpha_range():
    with pytest.raises(MetricDomainError):
        BryantShenMetric(math.pi / 2)


def test_domain_tests(funk_plus, euclid):
    assert funk_plus.contains((0.5, 0.5))
    assert not funk_plus.contains((0.9, 0.9))
    assert euclid.contains((10.0, -3.0))
    mask = funk_plus.inside(np.array([0.0, 0.99, 1.0]), np.zeros(3))
    assert mask.tolist() == [True, True, False]


def test_batched_evaluation(funk_minus):
    x1 = np.array([0.0, 0.2, -0.4])
    x2 = np.array([0.1, -0.3, 0.0])
    values = funk_minus.norm((x1, x2), (np.ones(3), np.full(3, 0.5)))
    expected = [funk_norm(-1, (a, b), (1.0, 0.5)) for a, b in zip(x1, x2)]
    np.testing.assert_allclose(values, expected, rtol=1e-15)


@given(x=interior, theta=directions, scale=st.floats(min_value=0.1, max_value=10.0))
@settings(max_examples=60, deadline=None)
def test_funk_positive_homogeneity(x, theta, scale):
    metric = FunkMetric(1)
    y = (math.cos(theta), math.sin(theta))
    scaled = (scale * y[0], scale * y[1])
    assert metric.norm(x, scaled) == pytest.approx(scale * metric.norm(x, y), rel=1e-12)
    assert metric.norm(x, y) > 0


@given(x=interior, theta=directions)
@settings(max_examples=40, deadline=None)
def test_reverse_funk_is_reversed_funk(x, theta):
    y = (math.cos(theta), math.sin(theta))
    forward = FunkMetric(1).norm(x, (-y[0], -y[1]))
    assert FunkMetric(-1).norm(x, y) == pytest.approx(forward, rel=1e-13)


@given(x=interior, theta=directions, sign=st.sampled_from([1, -1]))
@settings(max_examples=60, deadline=None)
def test_projective_factor_matches_norm_derivatives(x, theta, sign):
    metric = FunkMetric(sign)
    y = (math.cos(theta), math.sin(theta))
    derived = projective_factor_from_norm(metric, x, y)
    assert derived == pytest.approx(metric.projective_factor(x, y), rel=1e-10, abs=1e-12)


def test_projective_factor_from_norm_euclid(euclid):
    assert projective_factor_from_norm(euclid, (0.3, 0.4), (0.0, 1.0)) == 0.0


def test_projective_factor_from_norm_bryant(bryant):
    P = projective_factor_from_norm(bryant, (0.0, 0.0), (1.0, 0.0))
    assert P == pytest.approx(math.sqrt(2) / 2)


@pytest.mark.parametrize(
    ("spec", "cls", "label"),
    [
        ("funk:+", FunkMetric, "funk:+"),
        ("FUNK:-", FunkMetric, "funk:-"),
        ("euclid", EuclideanMetric, "euclid"),
        ("bryant:0.5", BryantShenMetric, "bryant:0.5"),
    ],
)
def test_parse_metric(spec, cls, label):
    metric = parse_metric(spec)
    assert isinstance(metric, cls)
    assert metric.label == label


@pytest.mark.parametrize("spec", ["funk:*", "bryant:abc", "bryant:2.0", "sphere"])
def test_parse_metric_rejects(spec):
    with pytest.raises(SpecParseError):
        parse_metric(spec)


def test_origin_constants(funk_plus, funk_minus, bryant):
    assert funk_plus.origin_constant == 0.5
    assert funk_minus.origin_constant == -0.5
    assert bryant.origin_constant == pytest.approx(1.0)
