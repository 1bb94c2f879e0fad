"""Shared test instances: side-search oracles and random multipath scenarios."""

import math

import numpy as np

from dss_sage.geometry import SPEED_OF_LIGHT, Direction
from dss_sage.sage.core import angle_window, coarse_estimate, fine_delay, sample_window
from dss_sage.sage.estimators import _mode_flags
from dss_sage.sage.model import EstimatorConfig
from dss_sage.sage.search import SideObjective, SideSearch, distance_bounds, local_region
from dss_sage.synth import NoiseModel, PathParams, PhaseInstabilityModel, friis_gain, simo_config, synthesize

DEG = math.pi / 180
MODES = ("dss-o-sage", "swf-sage", "dss-ffa", "pwf-sage")

# 2 deg scan grid: the local region is +-2 deg, small enough to enumerate
# the fine lattice exhaustively
ORACLE_CFG = simo_config(az=(0, 20, 2), el=(-4, 16, 2))


def search_case(k, cfg=ORACLE_CFG):
    """Random noiseless single-path instance and its rx-side search.

    Angle lattice 0.1/0.05 deg, distance lattice 0.05/0.01 m. The distance
    step is the production one: at short range the objective has a narrow
    elevation-distance ridge, and a lattice much coarser than the ridge
    width aliases it into separated maxima of near-equal height.
    """
    rng = np.random.default_rng(1000 + k)
    mode = MODES[k % 4]
    d = float(rng.uniform(3, 12))
    az, el = rng.uniform(0.5, 9.5), rng.uniform(0.5, 9.5)
    sigma = float(rng.uniform(0, 2)) if mode.startswith("dss") else 0.0
    p = PathParams(1e-5, d / SPEED_OF_LIGHT, Direction.from_degrees(az, el), d_rx=d)
    x = synthesize([p], cfg, PhaseInstabilityModel(0, sigma, k)).data
    ecfg = EstimatorConfig(
        angle_coarse_step=0.1 * DEG,
        angle_fine_step=0.05 * DEG,
        dist_coarse_step=0.05,
        dist_fine_step=0.01,
        wavefront="ffa" if mode == "dss-ffa" else "swf",
    )
    mode = "dss-o-sage" if mode == "dss-ffa" else mode
    n_t, n_r, i_m = (int(v) for v in coarse_estimate(x))
    tau = fine_delay(x, (n_t, n_r, i_m), cfg, ecfg.delay_step, ecfg.delay_half_width)
    coherent, use_distance = _mode_flags(mode, ecfg)
    rx = angle_window(cfg.rx_grid, n_r, cfg.rx_pattern, ecfg.angle_window_factor)
    smp = sample_window(i_m, ecfg.delay_half_width, cfg.kernel.n_samples)
    obj = SideObjective(cfg, "rx", n_r, x[n_t], rx, smp, tau, coherent, None, guard=True)
    bounds, far = distance_bounds(ecfg, cfg, "rx", tau) if use_distance else (None, True)
    return SideSearch(obj, local_region(cfg.rx_grid, n_r), ecfg, bounds, far)


def search_matches(k):
    """(matched, walk result, exhaustive result) for instance k."""
    s = search_case(k)
    r = s.run()
    ex = s.exhaustive_fine()
    return (r.azimuth, r.elevation, r.distance, r.value) == ex, r, ex


def random_scenario(cfg, k):
    """One to three paths at random geometry, phase instability and SNR."""
    rng = np.random.default_rng(k)
    paths = []
    for l in range(int(rng.integers(1, 4))):
        d = float(rng.uniform(3, 25))
        paths.append(
            PathParams(
                friis_gain(d, cfg.f_center) * rng.uniform(0.3, 1),
                d / SPEED_OF_LIGHT + 5e-9 * l,
                Direction.from_degrees(rng.uniform(0, 90), rng.uniform(-10, 10)),
                d_rx=d,
            )
        )
    return synthesize(paths, cfg, PhaseInstabilityModel(0, float(rng.uniform(0, 2)), k), NoiseModel(float(rng.uniform(20, 50)), k))
