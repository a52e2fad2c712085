"""Tests for curves, geodesics, parallel transport and loop holonomy."""

import math

import numpy as np
import pytest

from holonomy_lab.core.exceptions import (
    BoundaryExitError,
    ConvergenceError,
    MetricDomainError,
    SpecParseError,
)
from holonomy_lab.models.reports import SolverSettings
from holonomy_lab.services.circle_algebra import curvature_field
from holonomy_lab.services.circle_maps import (
    CircleMap,
    circle_map_compose,
    circle_map_distance,
)
from holonomy_lab.services.transport import (
    ArcSegment,
    LineSegment,
    LoopCurve,
    circle_loop,
    connection_coefficients,
    geodesic,
    hair_power,
    loop_holonomy,
    parallel_transport,
    parse_loop,
    parse_vector,
    polyline_loop,
    small_loop_field,
    square_loop,
    transport_along,
)

GRID = 64


class TestCurves:
    def test_square_orientation_and_area(self):
        loop = square_loop(0.1, -0.2, 0.3)
        assert loop.base_point == (0.1, -0.2)
        assert loop.orientation == 1
        assert loop.signed_area() == pytest.approx(0.09, rel=1e-12)
        assert loop.length == pytest.approx(1.2)
        assert loop.reversed().orientation == -1
        assert loop.reversed().base_point == loop.base_point

    def test_circle_area(self):
        loop = circle_loop(0.0, 0.0, 0.5)
        assert loop.signed_area() == pytest.approx(math.pi * 0.25, rel=1e-10)
        assert loop.length == pytest.approx(math.pi)

    def test_zero_length_segments_dropped(self):
        loop = polyline_loop([(0.0, 0.0), (0.0, 0.0), (0.2, 0.0), (0.2, 0.2)])
        assert len(loop.segments) == 3

    def test_point_loop_is_degenerate(self):
        loop = polyline_loop([(0.3, 0.3), (0.3, 0.3)])
        assert loop.is_degenerate
        assert loop.base_point == (0.3, 0.3)

    def test_disjoint_segments_rejected(self):
        with pytest.raises(ValueError):
            LoopCurve(
                (LineSegment((0.0, 0.0), (1.0, 0.0)), LineSegment((2.0, 0.0), (3.0, 0.0)))
            )

    def test_open_curve_not_closed(self):
        with pytest.raises(ValueError):
            LoopCurve((ArcSegment((0.0, 0.0), 1.0, 0.0, math.pi),))
        curve = LoopCurve((ArcSegment((0.0, 0.0), 1.0, 0.0, math.pi),), closed=False)
        np.testing.assert_allclose(curve.segments[0].end, [-1.0, 0.0], atol=1e-15)

    def test_concatenate(self):
        first = polyline_loop([(0.0, 0.0), (0.1, 0.0)], closed=False)
        second = polyline_loop([(0.1, 0.0), (0.1, 0.1)], closed=False)
        joined = first.concatenate(second)
        assert len(joined.segments) == 2
        with pytest.raises(ValueError):
            second.concatenate(second)

    def test_sample_rows(self):
        rows = square_loop(0.0, 0.0, 1.0).sample(points_per_segment=5)
        assert rows.shape == (20, 3)
        np.testing.assert_allclose(rows[4], [1.0, 1.0, 0.0])

    def test_parse_loop(self):
        square = parse_loop("square:0,0,0.2")
        assert square.signed_area() == pytest.approx(0.04)
        path = parse_loop("polyline:0,0;0.3,0;0.3,0.3", closed=False)
        assert not path.closed
        assert len(path.segments) == 2
        triangle = parse_loop("polyline:0,0;0.3,0;0.3,0.3")
        assert len(triangle.segments) == 3

    @pytest.mark.parametrize(
        "spec", ["circle:0,0,1", "square:0,0", "polyline:0,0", "square:a,b,c"]
    )
    def test_parse_loop_rejects(self, spec):
        with pytest.raises(SpecParseError):
            parse_loop(spec)

    def test_parse_vector(self):
        assert parse_vector("0.5,-1") == (0.5, -1.0)


class TestConnection:
    def test_euclid_connection_vanishes(self, euclid):
        G = connection_coefficients(euclid, (0.4, 0.1), (1.0, 2.0))
        assert np.all(G == 0.0)

    def test_funk_connection_at_origin(self, funk_plus):
        G = connection_coefficients(funk_plus, (0.0, 0.0), (1.0, 0.0))
        np.testing.assert_allclose(G, [[1.0, 0.0], [0.0, 0.5]], atol=1e-15)

    def test_batched_shape(self, funk_minus):
        fiber = (np.ones(5), np.linspace(-1, 1, 5))
        G = connection_coefficients(funk_minus, (0.1, 0.1), fiber)
        assert G.shape == (2, 2, 5)


class TestGeodesics:
    def test_euclid_geodesic_is_straight(self, euclid):
        path = geodesic(euclid, (0.3, 0.4), (0.0, 1.0), 2.0)
        np.testing.assert_allclose(path.positions[-1], [0.3, 2.4], atol=1e-12)
        assert path.speed_drift(euclid) <= 1e-12

    @pytest.mark.parametrize("sign_fixture", ["funk_plus", "funk_minus"])
    def test_funk_geodesics_are_straight(self, sign_fixture, request, rng):
        metric = request.getfixturevalue(sign_fixture)
        for _ in range(5):
            x0 = tuple(rng.uniform(-0.35, 0.35, 2))
            theta = rng.uniform(0, 2 * math.pi)
            path = geodesic(metric, x0, (math.cos(theta), math.sin(theta)), 0.3)
            assert path.chord_deviation() <= 1e-8
            assert path.speed_drift(metric) <= 1e-7

    def test_reverse_funk_reaches_boundary(self, funk_minus):
        with pytest.raises(BoundaryExitError) as excinfo:
            geodesic(funk_minus, (0.5, 0.0), (1.0, 0.0), 10.0)
        assert 0.0 < excinfo.value.exit_time < 10.0

    def test_fixed_step_geodesic_reaches_boundary(self, funk_minus):
        with pytest.raises(BoundaryExitError) as excinfo:
            geodesic(funk_minus, (0.5, 0.0), (1.0, 0.0), 10.0, SolverSettings(method="rk4"))
        assert 0.0 < excinfo.value.exit_time < 10.0

    @pytest.mark.parametrize("sign_fixture", ["funk_plus", "funk_minus"])
    def test_geodesic_is_self_parallel(self, sign_fixture, request):
        metric = request.getfixturevalue(sign_fixture)
        y0 = (0.6, -0.8)
        path = geodesic(metric, (0.1, 0.2), y0, 0.4)
        chord = LineSegment(tuple(path.positions[0]), tuple(path.positions[-1]))
        carried = parallel_transport(metric, chord, y0)
        np.testing.assert_allclose(carried.vector, path.velocities[-1], atol=1e-7)

    def test_start_outside_domain(self, funk_plus):
        with pytest.raises(MetricDomainError):
            geodesic(funk_plus, (1.5, 0.0), (1.0, 0.0), 1.0)


class TestParallelTransport:
    def test_euclid_transport_is_trivial(self, euclid):
        result = transport_along(euclid, square_loop(0.0, 0.0, 0.5), (0.3, -0.7))
        np.testing.assert_allclose(result.vector, [0.3, -0.7], atol=1e-14)
        assert not result.flagged

    def test_funk_transport_preserves_norm(self, funk_plus, funk_minus):
        curves = [
            polyline_loop([(0.0, 0.0), (0.3, 0.0), (0.3, 0.3)], closed=False),
            circle_loop(0.1, 0.1, 0.25),
        ]
        for metric in (funk_plus, funk_minus):
            for curve in curves:
                result = transport_along(metric, curve, (0.6, 0.8))
                assert result.norm_drift <= 1e-8
                assert result.stats.steps > 0

    def test_batched_transport(self, funk_plus):
        start = np.array([[1.0, 0.0], [0.0, 1.0], [-0.5, 0.5]])
        batch = transport_along(funk_plus, circle_loop(0.0, 0.0, 0.2), start)
        assert batch.vector.shape == (3, 2)
        single = transport_along(funk_plus, circle_loop(0.0, 0.0, 0.2), start[2])
        np.testing.assert_allclose(batch.vector[2], single.vector, atol=1e-9)

    def test_single_segment(self, funk_minus):
        segment = LineSegment((0.0, 0.0), (0.2, 0.1))
        result = parallel_transport(funk_minus, segment, (1.0, 1.0))
        assert result.vector.shape == (2,)
        assert result.norm_drift <= 1e-8

    def test_zero_vector_rejected(self, funk_plus):
        with pytest.raises(MetricDomainError):
            transport_along(funk_plus, square_loop(0.0, 0.0, 0.1), (0.0, 0.0))

    def test_curve_outside_domain(self, funk_plus):
        with pytest.raises(MetricDomainError):
            transport_along(funk_plus, square_loop(0.5, 0.5, 0.6), (1.0, 0.0))

    def test_bryant_cannot_leave_origin(self, bryant):
        with pytest.raises(MetricDomainError):
            transport_along(bryant, square_loop(0.0, 0.0, 0.1), (1.0, 0.0))


class TestHolonomy:
    def test_euclid_holonomy_is_identity(self, euclid):
        holonomy = loop_holonomy(euclid, square_loop(0.2, 0.2, 0.5), GRID)
        assert circle_map_distance(holonomy, CircleMap.identity(GRID)) <= 1e-10

    def test_degenerate_loop_is_identity(self, funk_plus):
        holonomy = loop_holonomy(funk_plus, polyline_loop([(0.1, 0.1), (0.1, 0.1)]), GRID)
        np.testing.assert_array_equal(holonomy.lift, CircleMap.identity(GRID).lift)

    def test_funk_square_is_nontrivial(self, funk_plus):
        holonomy = loop_holonomy(funk_plus, square_loop(0.0, 0.0, 0.2), GRID)
        displacement = holonomy.displacement()
        assert holonomy.is_monotone()
        assert np.mean(displacement) == pytest.approx(-0.25 * 0.04, rel=0.3)

    def test_reversed_loop_inverts(self, funk_minus):
        loop = square_loop(0.0, 0.0, 0.2)
        forward = loop_holonomy(funk_minus, loop, GRID)
        backward = loop_holonomy(funk_minus, loop.reversed(), GRID)
        composed = circle_map_compose(forward, backward)
        assert circle_map_distance(composed, CircleMap.identity(GRID)) <= 1e-7

    @pytest.mark.parametrize("size", [256, 512])
    def test_concatenated_loop_composes_holonomies(self, funk_plus, size):
        first = polyline_loop([(0.0, 0.0), (0.3, 0.0), (0.2, 0.2)])
        second = polyline_loop([(0.0, 0.0), (-0.1, 0.3), (-0.3, -0.1)])
        joined = LoopCurve(first.segments + second.segments)
        expected = circle_map_compose(
            loop_holonomy(funk_plus, second, size), loop_holonomy(funk_plus, first, size)
        )
        assert circle_map_distance(loop_holonomy(funk_plus, joined, size), expected) <= 1e-8

    def test_open_curve_rejected(self, funk_plus):
        with pytest.raises(ValueError):
            loop_holonomy(funk_plus, parse_loop("polyline:0,0;0.1,0", closed=False), GRID)

    def test_small_loop_field_funk(self, funk_plus):
        result = small_loop_field(funk_plus, (0.0, 0.0), N=GRID, nmax=8)
        assert result.field.a0 == pytest.approx(-0.25, abs=1e-3)
        assert result.nonconstant_fraction() <= 0.01
        assert result.convergence_order is not None
        assert result.convergence_order >= 0.5

    def test_small_loop_field_euclid(self, euclid):
        result = small_loop_field(euclid, (0.3, 0.3), N=GRID, nmax=8)
        assert result.field.sup_norm() <= 1e-8

    def test_small_loop_field_off_origin(self, funk_plus):
        x0 = (0.3, 0.0)
        result = small_loop_field(funk_plus, x0, N=128, nmax=8)
        expected = curvature_field(funk_plus, x0, size=128, nmax=8)
        assert result.field.distance(expected) <= 1e-3

    @pytest.mark.parametrize("sides", [(0.1,), (0.2, 0.1), (0.2, 0.1, 0.1)])
    def test_small_loop_field_needs_three_sides(self, funk_plus, sides):
        with pytest.raises(ConvergenceError):
            small_loop_field(funk_plus, (0.0, 0.0), sides=sides)

    def test_small_loop_field_rejects_nonpositive_side(self, funk_plus):
        with pytest.raises(ValueError):
            small_loop_field(funk_plus, (0.0, 0.0), sides=(0.2, 0.1, 0.0))

    def test_hair_power_single_step_is_square_holonomy(self, funk_plus):
        t = 0.01
        hair = hair_power(funk_plus, (0.0, 0.0), t, 1, GRID)
        square = loop_holonomy(funk_plus, square_loop(0.0, 0.0, 0.1), GRID)
        assert circle_map_distance(hair, square) <= 1e-10

    def test_hair_power_negative_time_inverts(self, funk_plus):
        forward = hair_power(funk_plus, (0.0, 0.0), 0.01, 2, GRID)
        backward = hair_power(funk_plus, (0.0, 0.0), -0.01, 2, GRID)
        composed = circle_map_compose(forward, backward)
        assert circle_map_distance(composed, CircleMap.identity(GRID)) <= 1e-7
