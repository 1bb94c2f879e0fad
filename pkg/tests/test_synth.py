import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dss_sage.geometry import SPEED_OF_LIGHT, Direction
from dss_sage.synth import (
    CirTensor,
    CirtFormatError,
    NoiseModel,
    PathOutsideWindowError,
    PathParams,
    PhaseInstabilityModel,
    add_noise,
    friis_gain,
    gen_phases,
    load_tensor,
    noise_variance,
    path_geometry,
    phase_matrix,
    save_tensor,
    simo_config,
    single_path_scenario,
    standard_phase_draw,
    synthesize,
    with_phases,
)


@pytest.fixture(scope="module")
def cfg():
    return simo_config()


@pytest.fixture(scope="module")
def flat_cfg():
    # zero rotator radius: every direction sees the same delay
    return simo_config(rotator_radius=0.0)


def test_zero_paths_give_zero_tensor(cfg):
    t = synthesize([], cfg)
    assert t.shape == (1, 180, 2001)
    assert not np.any(t.data)


def test_aligned_on_grid_sample_magnitude(flat_cfg):
    kern = flat_cfg.kernel
    n_r = int(np.flatnonzero(np.all(np.isclose(np.degrees(flat_cfg.rx_grid.angles), [10, 0]), axis=1))[0])
    p = PathParams(2e-5, float(kern.sample_delays[700]), Direction.from_degrees(10, 0))
    t = synthesize([p], flat_cfg)
    assert abs(abs(t.data[0, n_r, 700]) - p.gain * flat_cfg.peak_gain) < 1e-12


def test_single_path_shape_at_ten_metres(cfg):
    p = single_path_scenario(10.0, cfg.f_center, cfg)
    assert synthesize([p], cfg).shape == (1, 180, 2001)


def test_single_path_scenario_examples(cfg):
    p = single_path_scenario(10.0, cfg.f_center, cfg)
    assert p.doa.degrees == pytest.approx((5.0, 5.0))
    assert p.delay == pytest.approx(33.3564e-9, abs=1e-13)
    assert p.d_rx == 10.0
    assert friis_gain(10.0, 300e9) == pytest.approx(7.952e-6, rel=1e-4)
    assert 20 * math.log10(friis_gain(10.0, 300e9)) == pytest.approx(-101.99, abs=0.005)
    with pytest.raises(ValueError):
        single_path_scenario(0.0, 300e9, cfg)


def test_path_params_validation():
    with pytest.raises(ValueError):
        PathParams(-1.0, 1e-9, Direction(0, 0))
    with pytest.raises(ValueError):
        PathParams(1.0, -1e-9, Direction(0, 0))
    with pytest.raises(ValueError):
        PathParams(1.0, 1e-9, Direction(0, 0), d_rx=0.0)


def test_path_outside_window_is_rejected(cfg):
    with pytest.raises(PathOutsideWindowError):
        synthesize([PathParams(1.0, 499e-9, Direction(0, 0))], cfg)
    with pytest.raises(PathOutsideWindowError):
        synthesize([PathParams(1.0, 0.0, Direction(0, 0))], cfg)


def test_phase_shape_mismatch(cfg):
    p = PathParams(1.0, 50e-9, Direction(0, 0), phases=np.zeros((1, 3)))
    with pytest.raises(ValueError):
        synthesize([p], cfg)


def test_gen_phases_constant_without_sigma():
    m = PhaseInstabilityModel(0.13, 0.0, 5)
    assert {gen_phases(m, 0, 0, k) for k in range(20)} == {0.13}


def test_gen_phases_statistics_and_determinism():
    z = np.array([standard_phase_draw(11, 0, 0, k) for k in range(100_000)])
    assert np.std(1.83 * z) == pytest.approx(1.83, rel=0.02)
    m = PhaseInstabilityModel(0.0, 1.83, 11)
    a = [gen_phases(m, 1, 0, k) for k in range(50)]
    assert a == [gen_phases(m, 1, 0, k) for k in range(50)]
    assert all(-math.pi < v <= math.pi for v in a)
    assert a != [gen_phases(PhaseInstabilityModel(0.0, 1.83, 12), 1, 0, k) for k in range(50)]


def test_noise_identity_and_variance():
    t = CirTensor(np.ones((1, 2, 3), dtype=complex), None, {"peak_power": 1.0})
    assert add_noise(t, NoiseModel(math.inf, 1)) is t
    assert noise_variance(40.0, 1.0) == pytest.approx(1e-4)
    z = CirTensor(np.zeros((1, 500, 2000), dtype=complex), None, {"peak_power": 1.0})
    n = add_noise(z, NoiseModel(40.0, 3))
    assert n.meta["noise_variance"] == pytest.approx(1e-4)
    assert np.mean(np.abs(n.data) ** 2) == pytest.approx(1e-4, rel=0.01)
    # circular: real and imaginary parts carry half the power each
    assert np.mean(n.data.real**2) == pytest.approx(0.5e-4, rel=0.02)


def test_noise_needs_reference_power():
    with pytest.raises(ValueError):
        add_noise(CirTensor(np.zeros((1, 1, 4), dtype=complex)), NoiseModel(10.0, 0))


def test_synthesis_is_deterministic(cfg):
    p = single_path_scenario(10.0, cfg.f_center, cfg)
    a = synthesize([p], cfg, PhaseInstabilityModel(0, 1.8, 4), NoiseModel(40, 4))
    b = synthesize([p], cfg, PhaseInstabilityModel(0, 1.8, 4), NoiseModel(40, 4))
    assert np.array_equal(a.data, b.data)


def test_rank_one_structure_without_phases(flat_cfg):
    p = PathParams(3e-6, 61.3e-9, Direction.from_degrees(23, -7))
    h = synthesize([p], flat_cfg).data[0]
    delays, gains = path_geometry(p, flat_cfg)
    r = flat_cfg.kernel.response(p.delay)
    np.testing.assert_allclose(h, p.gain * gains[0][:, None] * r[None, :], rtol=0, atol=1e-12 * p.gain)
    assert np.linalg.matrix_rank(h, tol=1e-12 * np.abs(h).max()) == 1


@settings(max_examples=10, deadline=None)
@given(st.floats(3, 140), st.floats(0, 360), st.floats(-20, 20), st.floats(3, 140), st.floats(0, 360))
def test_linearity(d1, az1, el1, d2, az2):
    cfg = simo_config(az=(0, 330, 30), el=(-20, 20, 20))
    a = PathParams(1e-5, d1 / SPEED_OF_LIGHT, Direction.from_degrees(az1, el1), d_rx=d1)
    b = PathParams(4e-6, d2 / SPEED_OF_LIGHT + 5e-9, Direction.from_degrees(az2, 0), d_rx=d2)
    ph = PhaseInstabilityModel(0, 1.0, 9)
    both = synthesize([a, b], cfg, ph).data
    # explicit phases keep each path's draw independent of its list position
    pa = synthesize([a], cfg, ph).data
    pb = synthesize([with_phases(b, phase_matrix(ph, 1, 1, len(cfg.rx_grid)))], cfg).data
    np.testing.assert_allclose(both, pa + pb, rtol=0, atol=1e-20)


def test_noiseless_energy(cfg):
    p = single_path_scenario(10.0, cfg.f_center, cfg)
    t = synthesize([p], cfg, PhaseInstabilityModel(0, 1.8, 2))
    _, gains = path_geometry(p, cfg)
    e = np.vdot(t.data, t.data).real
    assert e == pytest.approx(p.gain**2 * np.sum(gains**2), rel=1e-9)


def test_cirt_round_trip_and_layout(tmp_path, cfg):
    rng = np.random.default_rng(0)
    data = rng.standard_normal(cfg.shape) + 1j * rng.standard_normal(cfg.shape)
    t = CirTensor(data, cfg, {"phase_seed": 3})
    f = tmp_path / "a.cirt"
    save_tensor(t, f)
    assert f.stat().st_size == 20 + 16 * 360180
    back = load_tensor(f)
    assert back.data.tobytes() == data.tobytes()
    assert back.config.shape == cfg.shape
    assert back.config.kernel == cfg.kernel
    assert back.meta["phase_seed"] == 3


def test_cirt_format_errors(tmp_path):
    t = CirTensor(np.zeros((1, 2, 3), dtype=complex))
    f = tmp_path / "b.cirt"
    save_tensor(t, f)
    raw = bytearray(f.read_bytes())
    for mutate in (
        lambda b: b.__setitem__(slice(0, 4), b"XIRT"),
        lambda b: b.__setitem__(slice(4, 8), (2).to_bytes(4, "little")),
        lambda b: b.__delitem__(slice(-8, None)),
        lambda b: b.__delitem__(slice(10, None)),
        lambda b: b.__setitem__(slice(8, 20), (2**31).to_bytes(4, "little") * 3),
    ):
        bad = bytearray(raw)
        mutate(bad)
        g = tmp_path / "bad.cirt"
        g.write_bytes(bytes(bad))
        with pytest.raises(CirtFormatError):
            load_tensor(g)
