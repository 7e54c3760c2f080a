import math

import numpy as np
import pytest

from dualloop.middleware.error_handler import InvalidParameterError
from dualloop.models import UM, Circle, LoopSpec, Phasor, Point3, Segment
from dualloop.services.geometry import (
    discretize,
    equal_area_radius,
    hex_sites,
    perimeter,
    segment_arrays,
    signed_area,
    vertices,
)


def test_hex_sites_counts_and_orders():
    layout = hex_sites(60.0, 2)
    assert len(layout) == 19
    origin = Point3(0.0, 0.0, 0.0)
    expected = {0: 0.0, 1: 60.0, 2: 60.0 * math.sqrt(3.0), 3: 120.0}
    for order, distance_um in expected.items():
        sites = layout.by_order(order)
        assert len(sites) == (1 if order == 0 else 6)
        for site in sites:
            assert site.position.distance_to(origin) / UM == pytest.approx(distance_um)


def test_hex_sites_first_neighbour_on_x_axis():
    first = hex_sites(60.0, 1).by_order(1)[0]
    assert first.position.x / UM == pytest.approx(60.0)
    assert first.position.y == pytest.approx(0.0, abs=1e-15)


def test_hex_sites_zero_rings_is_origin_only():
    layout = hex_sites(60.0, 0)
    assert len(layout) == 1
    assert layout.sites[0].order == 0


@pytest.mark.parametrize("spacing, rings", [(0.0, 1), (-5.0, 1), (float("nan"), 1), (60.0, -1)])
def test_hex_sites_rejects_bad_input(spacing, rings):
    with pytest.raises(InvalidParameterError):
        hex_sites(spacing, rings)


def test_circle_discretisation_perimeter_and_area():
    loop = LoopSpec.circle(15.0, segment_count=1024)
    segments = discretize(loop)
    assert len(segments) == 1024
    assert perimeter(segments) == pytest.approx(math.pi * 15e-6, rel=1e-5)
    assert signed_area(segments) == pytest.approx(math.pi * (7.5e-6) ** 2, rel=1e-4)


def test_circle_polygon_keeps_exact_area():
    for n in (16, 64, 1024):
        segments = discretize(LoopSpec.circle(15.0, segment_count=n))
        assert signed_area(segments) == pytest.approx(math.pi * (7.5e-6) ** 2, rel=1e-12)
    assert equal_area_radius(7.5e-6, 1024) > 7.5e-6


def test_perimeter_error_shrinks_with_each_doubling():
    errors = [
        abs(perimeter(discretize(LoopSpec.circle(15.0, segment_count=n))) - math.pi * 15e-6)
        for n in (16, 32, 64, 128, 256, 512, 1024, 2048)
    ]
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_winding_sets_orientation():
    ccw = signed_area(discretize(LoopSpec.circle(38.0, winding=1)))
    cw = signed_area(discretize(LoopSpec.circle(38.0, winding=-1)))
    assert ccw > 0
    assert cw == pytest.approx(-ccw)


def test_polyline_is_closed_and_centred():
    loop = LoopSpec.circle(15.0, centre_um=(10.0, -5.0, 2.0), segment_count=64)
    pts = vertices(loop)
    assert pts.shape == (65, 3)
    np.testing.assert_allclose(pts[0], pts[-1])
    np.testing.assert_allclose(pts[:-1].mean(axis=0), [10e-6, -5e-6, 2e-6], atol=1e-15)
    starts, ends = segment_arrays(loop)
    np.testing.assert_allclose(starts[1:], ends[:-1])


def test_rectangle_segments_at_most_half_micron():
    loop = LoopSpec.rectangle(15.0, 15.0)
    segments = discretize(loop)
    assert len(segments) == 120
    assert max(s.length for s in segments) <= 0.5e-6 * (1 + 1e-9)
    assert perimeter(segments) == pytest.approx(60e-6)
    assert signed_area(segments) == pytest.approx(225e-12)


def test_square_with_four_segments_per_side():
    segments = discretize(LoopSpec.rectangle(38.0, 38.0, segment_count=16))
    assert len(segments) == 16
    assert perimeter(segments) == pytest.approx(152e-6, rel=1e-12)


@pytest.mark.parametrize("width, height", [(38.0, 38.0), (100.0, 1.0)])
def test_rectangle_uses_every_requested_segment(width, height):
    segments = discretize(LoopSpec.rectangle(width, height, segment_count=20))
    assert len(segments) == 20
    assert perimeter(segments) == pytest.approx(2 * (width + height) * 1e-6)


def test_rectangle_rejects_odd_segment_count():
    with pytest.raises(InvalidParameterError):
        LoopSpec.rectangle(38.0, 38.0, segment_count=17)


def test_zero_length_segment_is_rejected():
    p = Point3.um(1.0, 2.0, 0.0)
    with pytest.raises(InvalidParameterError):
        Segment(p, p)


def test_loop_spec_validation():
    with pytest.raises(InvalidParameterError):
        LoopSpec.circle(15.0, winding=2)
    with pytest.raises(InvalidParameterError):
        LoopSpec.circle(15.0, segment_count=8)
    with pytest.raises(InvalidParameterError):
        Circle(0.0)
    with pytest.raises(InvalidParameterError):
        Point3(float("nan"), 0.0, 0.0)


def test_phasor_folds_phase_and_rejects_negative_amplitude():
    assert Phasor(1.0, 2 * math.pi + 0.5).phase == pytest.approx(0.5)
    assert Phasor(2.0, math.pi / 2).value == pytest.approx(2j)
    with pytest.raises(InvalidParameterError):
        Phasor(-1.0, 0.0)


def test_with_drive_keeps_geometry():
    loop = LoopSpec.circle(38.0)
    driven = loop.with_drive(0.3, math.pi)
    assert driven.same_geometry(loop)
    assert driven.drive.amplitude == 0.3
