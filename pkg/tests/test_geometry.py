import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dss_sage.geometry import (
    SPEED_OF_LIGHT,
    Direction,
    RotatorGeometry,
    ScanGrid,
    antenna_position,
    antenna_positions,
    observed_geometry_ffa,
    observed_geometry_swf,
    off_boresight,
    pointing_rotations,
    rayleigh_distance,
    scatter_position,
    side_offsets,
    unit_vector,
    wrap_angle,
    wrap_degrees,
)
from dss_sage.synth import PathParams

azimuths = st.floats(-10.0, 10.0, allow_nan=False)


def test_unit_vector_axes_and_diagonal():
    np.testing.assert_allclose(unit_vector(0.0, 0.0), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(unit_vector(math.pi / 2, 0.0), [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(unit_vector(math.pi / 4, math.pi / 4), [0.5, 0.5, 0.70711], atol=5e-6)


def test_unit_vector_norm_many_directions():
    rng = np.random.default_rng(0)
    az = rng.uniform(0, 2 * math.pi, 10_000)
    el = rng.uniform(-math.pi / 2, math.pi / 2, 10_000)
    n = np.linalg.norm(unit_vector(az, el), axis=-1)
    assert np.max(np.abs(n - 1)) < 1e-12


def test_direction_normalises_azimuth_and_rejects_elevation():
    d = Direction(-math.pi / 2, 0.1)
    assert d.azimuth == pytest.approx(1.5 * math.pi)
    assert 0 <= Direction(7.0, 0).azimuth < 2 * math.pi
    with pytest.raises(ValueError):
        Direction(0.0, 1.6)


@given(azimuths)
def test_wrap_angle_range(x):
    w = wrap_angle(x)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(x), abs_tol=1e-9)


def test_wrap_degrees_boundaries():
    np.testing.assert_allclose(wrap_degrees([180.0, -180.0, 350.0, 10.0]), [180.0, 180.0, -10.0, 10.0])


def test_antenna_position_examples():
    g = RotatorGeometry(0.23, 0.18)
    p = antenna_position(Direction(0, 0), g)
    np.testing.assert_allclose(p, [0.23, 0, 0.18], atol=1e-12)
    assert np.linalg.norm(p) == pytest.approx(0.29206, abs=5e-6)
    np.testing.assert_allclose(antenna_position(Direction(math.pi / 2, 0), g), [0, 0.23, 0.18], atol=1e-12)
    np.testing.assert_allclose(antenna_position(Direction(0, 0), RotatorGeometry(1.0)), [1, 0, 0], atol=1e-15)


def test_vsa_radius():
    assert RotatorGeometry(0.23, 0.18).radius == pytest.approx(0.292, abs=1e-3)


def test_rotator_without_horizontal_arm_is_rejected():
    with pytest.raises(ValueError):
        RotatorGeometry(0.0, 0.1)


@settings(max_examples=50)
@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_antenna_positions_lie_on_sphere(rh, rv):
    g = RotatorGeometry(rh, rv)
    grid = ScanGrid.rectangular(0, 350, 10, -20, 20, 10)
    r = np.linalg.norm(antenna_positions(grid.angles, g), axis=-1)
    np.testing.assert_allclose(r, math.hypot(rh, rv), rtol=1e-12)


def test_scatter_position_examples():
    np.testing.assert_allclose(scatter_position([0, 0, 0], Direction(0, 0), 10), [10, 0, 0])
    np.testing.assert_allclose(scatter_position([1, 1, 0], Direction(math.pi / 2, 0), 2), [1, 3, 0], atol=1e-15)
    np.testing.assert_allclose(scatter_position([0, 0, 0], Direction(math.pi / 4, math.pi / 4), 1), [0.5, 0.5, 0.70711], atol=5e-6)
    with pytest.raises(ValueError):
        scatter_position([0, 0, 0], Direction(0, 0), 0.0)


def test_rayleigh_distances():
    # nominal 300 GHz wavelength of 1 mm (c rounded to 3e8 m/s)
    assert float(f"{rayleigh_distance(0.4, 1e-3):.4g}") == 320.0
    assert rayleigh_distance(0.4, SPEED_OF_LIGHT / 300e9) == pytest.approx(320.2215, abs=1e-4)
    assert float(f"{rayleigh_distance(0.58, 1e-3):.4g}") == 672.8
    assert rayleigh_distance(1, 2) == 1
    with pytest.raises(ValueError):
        rayleigh_distance(0, 1)


def test_swf_delay_matches_vector_oracle():
    # frozen from plain-math vector arithmetic: LBS at 10 m toward (5, 5) deg,
    # antenna at (0.23, 0, 0.18)
    path = PathParams(1.0, 33.356e-9, Direction.from_degrees(5, 5), d_rx=10.0)
    rx = antenna_position(Direction(0, 0), RotatorGeometry(0.23, 0.18))
    delay, _, doa = observed_geometry_swf(path, np.zeros(3), rx)
    assert delay == pytest.approx(3.2546709703115654e-08, rel=1e-13)
    lbs = 10 * unit_vector(path.doa)
    np.testing.assert_allclose(doa, (lbs - rx) / np.linalg.norm(lbs - rx), atol=1e-15)


def test_swf_at_reference_is_exact():
    path = PathParams(1.0, 20e-9, Direction(0.3, 0.2), Direction(1.0, -0.1), d_tx=4.0, d_rx=7.0)
    delay, dod, doa = observed_geometry_swf(path, np.zeros(3), np.zeros(3))
    assert delay == path.delay
    np.testing.assert_allclose(dod, unit_vector(path.dod), atol=1e-15)
    np.testing.assert_allclose(doa, unit_vector(path.doa), atol=1e-15)


@settings(max_examples=30)
@given(st.floats(0, 2 * math.pi), st.floats(-1.2, 1.2))
def test_swf_tends_to_ffa(az, el):
    r = 0.3
    rx = antenna_position(Direction(1.0, 0.1), RotatorGeometry(0.2, 0.1))
    far = PathParams(1.0, 50e-9, Direction(az, el), d_rx=1e7 * r)
    d_swf, _, _ = observed_geometry_swf(far, np.zeros(3), rx)
    d_ffa, _, doa = observed_geometry_ffa(far, np.zeros(3), rx)
    assert abs(d_swf - d_ffa) / d_ffa < 1e-9
    np.testing.assert_allclose(doa, unit_vector(far.doa), atol=1e-15)


def test_ffa_limit_at_one_million_metres():
    rx = antenna_position(Direction(0, 0), RotatorGeometry(0.23, 0.18))
    p = PathParams(1.0, 33.356e-9, Direction.from_degrees(5, 5), d_rx=1e6)
    assert abs(observed_geometry_swf(p, np.zeros(3), rx)[0] - observed_geometry_ffa(p, np.zeros(3), rx)[0]) < 1e-16


def test_ffa_doa_identical_over_grid():
    grid = ScanGrid.rectangular(0, 350, 10, -20, 20, 10)
    pos = antenna_positions(grid.angles, RotatorGeometry(0.2 / math.sqrt(2), 0.2 / math.sqrt(2)))
    _, dirs = side_offsets(0.1, 0.05, math.inf, pos)
    assert np.all(dirs == dirs[:, :1])


def test_zero_radius_gives_scan_independent_delay():
    grid = ScanGrid.rectangular(0, 350, 10, -20, 20, 10)
    pos = antenna_positions(grid.angles, RotatorGeometry(0.0))
    off, _ = side_offsets(0.1, 0.05, 3.0, pos)
    assert np.all(off == 0)


def test_antenna_at_scatter_raises():
    with pytest.raises(ValueError):
        side_offsets(0.0, 0.0, 1.0, [[1.0, 0.0, 0.0]])


def test_scan_grid_shape_and_order():
    g = ScanGrid.rectangular(0, 350, 10, -20, 20, 10)
    assert len(g) == 180
    np.testing.assert_allclose(np.degrees(g.angles[:6]), [[0, -20], [0, -10], [0, 0], [0, 10], [0, 20], [10, -20]], atol=1e-12)
    az0, span, lo, hi = g.extent()
    assert span == pytest.approx(2 * math.pi)
    assert (math.degrees(lo), math.degrees(hi)) == pytest.approx((-25, 25))


def test_neighbourhood_wraps_azimuth():
    g = ScanGrid.rectangular(0, 350, 10, -20, 20, 10)
    n = 2  # (0, 0)
    nb = g.neighbourhood(n, math.radians(12), math.radians(12))
    az = set(np.round(np.degrees(g.angles[nb, 0])).astype(int))
    assert az == {350, 0, 10}
    assert len(nb) == 9


@settings(max_examples=40)
@given(st.floats(0, 2 * math.pi), st.floats(-1.4, 1.4), st.floats(-0.5, 0.5))
def test_pointing_frame_offsets(az, el, daz):
    rot = pointing_rotations(np.array([[az, el]]))
    np.testing.assert_allclose(rot[0] @ rot[0].T, np.eye(3), atol=1e-12)
    a, e = off_boresight(rot, unit_vector(az, el)[None, :])
    assert abs(a[0]) < 1e-9 and abs(e[0]) < 1e-9
    # a direction displaced purely in azimuth at zero elevation keeps zero local elevation
    rot0 = pointing_rotations(np.array([[az, 0.0]]))
    a, e = off_boresight(rot0, unit_vector(az + daz, 0.0)[None, :])
    assert a[0] == pytest.approx(daz, abs=1e-12)
    assert abs(e[0]) < 1e-12
