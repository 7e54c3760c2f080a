import math

import numpy as np
import pytest

from dualloop.middleware.error_handler import (
    FitDomainError,
    InvalidParameterError,
    SingularPointError,
)
from dualloop.models import LoopSpec, Point3
from dualloop.services.magnetostatics import (
    SCAN_COLUMNS,
    amplitude_decay_exponent,
    field_at,
    fields_at,
    fit_power_law,
    line_scan,
    plane_map,
    power_db,
    scan_table,
)

MU0 = 4e-7 * math.pi
ORIGIN = Point3(0.0, 0.0, 0.0)


def on_axis_bz(radius: float, z: float) -> float:
    return MU0 * radius**2 / (2 * (radius**2 + z**2) ** 1.5)


def test_centre_field_matches_circular_loop(inner):
    b = field_at([inner], ORIGIN)
    assert b.bz.real == pytest.approx(MU0 / 15e-6, rel=1e-4)
    assert abs(b.bx) < 1e-12 * abs(b.bz)
    assert abs(b.by) < 1e-12 * abs(b.bz)


@pytest.mark.parametrize("z_um", [1.0, 10.0, 100.0])
def test_axial_field_matches_closed_form(inner, z_um):
    b = field_at([inner], Point3.um(0.0, 0.0, z_um))
    assert b.bz.real == pytest.approx(on_axis_bz(7.5e-6, z_um * 1e-6), rel=1e-4)


def test_reversed_winding_flips_field():
    p = Point3.um(30.0, 5.0, 1.0)
    ccw = field_at([LoopSpec.circle(15.0, winding=1)], p).as_array()
    cw = field_at([LoopSpec.circle(15.0, winding=-1)], p).as_array()
    np.testing.assert_allclose(cw, -ccw, rtol=1e-12)


def test_drive_phasor_scales_unit_field(inner):
    p = np.array([Point3.um(40.0, 0.0, 1.0).as_tuple()])
    unit = fields_at([inner], p)
    driven = fields_at([inner.with_drive(2.0, math.pi / 2)], p)
    np.testing.assert_allclose(driven, 2j * unit, rtol=1e-12)


def test_superposition_of_loops(inner, outer):
    p = np.array([Point3.um(50.0, 3.0, 1.0).as_tuple()])
    pair = fields_at([inner, outer.with_drive(0.5, math.pi)], p)
    expected = fields_at([inner], p) - 0.5 * fields_at([outer], p)
    np.testing.assert_allclose(pair, expected, rtol=1e-10)


def test_zero_amplitude_loop_contributes_nothing(inner, outer):
    p = np.array([Point3.um(50.0, 0.0, 1.0).as_tuple()])
    np.testing.assert_array_equal(
        fields_at([inner, outer.with_drive(0.0, 0.0)], p), fields_at([inner], p)
    )


def test_point_on_conductor_is_singular(inner):
    with pytest.raises(SingularPointError):
        field_at([inner], Point3.um(7.5, 0.0, 0.0))


def test_chunked_evaluation_matches_single_points(inner):
    x = np.linspace(20.0, 200.0, 600)
    points = np.column_stack([x, np.zeros_like(x), np.ones_like(x)]) * 1e-6
    batch = fields_at([inner], points)
    for i in (0, 255, 256, 599):
        single = field_at([inner], Point3(*points[i])).as_array()
        np.testing.assert_allclose(batch[i], single, rtol=1e-12)


@pytest.mark.parametrize("x_um, y_um", [(60.0, 0.0), (30.0, 10.0), (0.0, 120.0)])
def test_segment_doubling_at_default_resolution(x_um, y_um):
    p = Point3.um(x_um, y_um, 1.0)

    def magnitude(n: int) -> float:
        return field_at([LoopSpec.circle(15.0, segment_count=n)], p).magnitude

    assert abs(magnitude(2048) / magnitude(1024) - 1) < 1e-6


def test_power_db():
    assert power_db(1e-6, 1e-3) == pytest.approx(-30.0)
    assert power_db(0.0, 1.0) == -math.inf
    np.testing.assert_allclose(power_db(np.array([1.0, 10.0]), 1.0), [0.0, 10.0])
    with pytest.raises(InvalidParameterError):
        power_db(1.0, 0.0)


def test_single_loop_crosstalk_at_first_neighbour(inner):
    local = field_at([inner], Point3.um(0.0, 0.0, 1.0)).power_total
    remote = field_at([inner], Point3.um(60.0, 0.0, 1.0)).power_total
    assert power_db(remote, local) == pytest.approx(-59.82, abs=0.05)


def test_line_scan_reference_defaults_to_first_point(inner):
    scan = line_scan([inner], ORIGIN, (1.0, 0.0, 0.0), [0.0, 10.0, 20.0], z_height_um=1.0)
    assert len(scan) == 3
    assert scan.reference_power == pytest.approx(scan.p_total[0])
    table = scan_table(scan)
    assert list(table.columns) == SCAN_COLUMNS
    assert table["P_total_db"].iloc[0] == pytest.approx(0.0)
    assert table["z_um"].tolist() == pytest.approx([1.0, 1.0, 1.0])


def test_line_scan_normalises_direction(inner):
    scan = line_scan([inner], ORIGIN, (2.0, 0.0, 0.0), [20.0, 30.0], z_height_um=1.0)
    assert scan.direction == (1.0, 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        line_scan([inner], ORIGIN, (0.0, 0.0, 0.0), [20.0, 30.0])


@pytest.mark.parametrize("positions", [[10.0], [10.0, 10.0], [20.0, 10.0]])
def test_line_scan_rejects_bad_positions(inner, positions):
    with pytest.raises(InvalidParameterError):
        line_scan([inner], ORIGIN, (1.0, 0.0, 0.0), positions, z_height_um=1.0)


def test_single_loop_far_field_exponent(inner):
    scan = line_scan(
        [inner], ORIGIN, (1.0, 0.0, 0.0), np.arange(0.0, 200.5, 0.5), z_height_um=1.0
    )
    fit = fit_power_law(scan, 80.0, 200.0)
    assert fit.exponent == pytest.approx(-6.02, abs=0.05)
    assert fit.samples == 241


def test_axial_amplitude_exponent(inner):
    z = np.logspace(-1, np.log10(500.0), 241)
    scan = line_scan([inner], ORIGIN, (0.0, 0.0, 1.0), z)
    far = amplitude_decay_exponent(scan, 100.0, 500.0)
    near = amplitude_decay_exponent(scan, 0.1, 1.0)
    assert far.exponent == pytest.approx(-3.0, abs=0.01)
    assert abs(near.exponent) < 0.05


def test_power_law_needs_enough_samples(inner):
    scan = line_scan([inner], ORIGIN, (1.0, 0.0, 0.0), [50.0, 60.0, 70.0], z_height_um=1.0)
    with pytest.raises(FitDomainError):
        fit_power_law(scan, 50.0, 70.0)


def test_plane_map_grid(inner):
    axis = np.array([-20.0, 0.0, 20.0])
    table = plane_map([inner], axis, axis, 1.0)
    assert len(table) == 9
    assert list(table.columns) == ["x_um", "y_um", "P_total", "P_z", "P_total_db", "P_z_db"]
    centre = table[(table.x_um == 0.0) & (table.y_um == 0.0)]
    assert centre["P_total_db"].iloc[0] == pytest.approx(0.0)
    assert (table["P_total_db"] <= 1e-9).all()
