"""End-to-end acceptance checks, one test per criterion.

Every test prints one ``criterion N: PASS|FAIL`` line with the measured
numbers (repeated in the terminal summary) and then asserts. The Monte Carlo
runs are cached per session so criteria sharing a scenario reuse trials.
"""

import functools
import math
from dataclasses import replace

import numpy as np
from oracles import random_scenario, search_matches

from dss_sage.config import default_document, spec_from_dict
from dss_sage.evalkit import (
    ci_fit,
    d_th,
    delay_spread,
    fim_gain_only,
    fspl_db,
    mean_fpr_db,
    path_loss,
    rmse,
)
from dss_sage.experiments import crlb_report, make_tensor, run_bench, run_trial, scenario_paths, trial_seed
from dss_sage.geometry import SPEED_OF_LIGHT, Direction, RotatorGeometry, rayleigh_distance
from dss_sage.sage.core import angle_window, coarse_estimate, e_step, lambda_prime, reconstruct, sample_window
from dss_sage.sage.estimators import m_step, run_dss_o_sage, run_noise_elimination, run_sage
from dss_sage.sage.model import EstimatorConfig, EvalCounters
from dss_sage.synth import (
    NoiseModel,
    PathParams,
    PhaseInstabilityModel,
    friis_gain,
    path_geometry,
    phase_matrix,
    simo_config,
    single_path_scenario,
    synthesize,
    with_phases,
)
from dss_sage.waveform import vna_kernel

TRIALS = 100
TENSOR_SIZE = 1 * 180 * 2001


@functools.cache
def base_spec():
    return spec_from_dict(default_document())


def scenario_spec(distance, sigma, snr=40.0):
    spec = base_spec()
    return replace(spec, scenario=replace(spec.scenario, distance=distance, phase_sigma=sigma, snr_db=snr))


@functools.cache
def monte_carlo(estimator, distance, sigma, with_fpr=False):
    spec = scenario_spec(distance, sigma)
    return tuple(run_trial(spec, k, estimator, with_fpr=with_fpr) for k in range(TRIALS))


def angle_rmse(rows):
    """Combined angular RMSE sqrt(mean(d_az^2 + d_el^2)) in degrees."""
    err = np.array([[r["err_az_deg"], r["err_el_deg"]] for r in rows])
    return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


def fpr_stats(rows):
    v = np.array([r["fpr_db"] for r in rows])
    return mean_fpr_db(v), float(np.mean(v[np.isfinite(v)])), float(np.max(v))


# ---------------------------------------------------------------- closed-form numbers


def test_criterion_01_rayleigh_distances(verdict):
    # nominal 1 mm wavelength at 300 GHz
    a = float(f"{rayleigh_distance(0.4, 1e-3):.4g}")
    b = float(f"{rayleigh_distance(0.58, 1e-3):.4g}")
    ok = a == 320.0 and b == 672.8
    assert verdict(1, ok, f"Rayleigh distance 0.4 m -> {a} m, 0.58 m -> {b} m")


def test_criterion_02_distance_threshold(verdict):
    v = d_th(math.radians(8), 0.29, SPEED_OF_LIGHT / 313.5e9)
    assert verdict(2, abs(v - 0.94) <= 0.02, f"d_th(8 deg, 0.29 m, 313.5 GHz) = {v:.4f} m (0.94 +- 0.02)")


def test_criterion_03_vsa_radius(verdict):
    r = RotatorGeometry(0.23, 0.18).radius
    assert verdict(3, abs(r - 0.292) <= 1e-3, f"VSA radius = {r:.5f} m (0.292 +- 1e-3)")


def test_criterion_04_partial_data(verdict):
    spec = scenario_spec(10.0, 1.8)
    t, _ = make_tensor(spec.sounding, spec.scenario, trial_seed(spec.seed, 0))
    c = EvalCounters()
    m_step(t.data, t.config, spec.estimator, "dss-o-sage", c)
    ratio = c.max_elements_per_eval / TENSOR_SIZE
    ok = t.data.size == TENSOR_SIZE and ratio <= 1e-3
    assert verdict(4, ok, f"{c.max_elements_per_eval} of {TENSOR_SIZE} elements per evaluation (ratio {ratio:.3e} <= 1e-3)")


def test_criterion_05_evaluation_counts(verdict):
    rows = {r["estimator"]: r for r in run_bench(base_spec())}
    dss = rows["dss-o-sage"]["likelihood_evals"]
    pwf = rows["pwf-sage"]["likelihood_evals"] / dss
    swf = rows["swf-sage"]["likelihood_evals"] / dss
    ok = pwf >= 10 and swf >= 100
    assert verdict(5, ok, f"DSS {dss} evaluations; PWF {pwf:.1f}x (>= 10), SWF {swf:.1f}x (>= 100)")


# ---------------------------------------------------------------- Monte Carlo relations


def test_criterion_06_phase_instability(verdict):
    r0 = angle_rmse(monte_carlo("dss-o-sage", 10.0, 0.0))
    dss_rows = monte_carlo("dss-o-sage", 10.0, 1.8, True)
    r1 = angle_rmse(dss_rows)
    fpr = {e: fpr_stats(monte_carlo(e, 10.0, 1.8, True)) for e in ("pwf-sage", "swf-sage")}
    fpr["dss-o-sage"] = fpr_stats(dss_rows)
    ok = r1 <= 2 * r0 and fpr["pwf-sage"][0] >= -10 and fpr["swf-sage"][0] >= -10 and fpr["dss-o-sage"][0] <= -25
    fmt = "; ".join(f"{e} FPR {m:.1f} dB (dB-mean {a:.1f}, max {x:.1f})" for e, (m, a, x) in fpr.items())
    assert verdict(6, ok, f"DSS AoA RMSE {r1:.4f} deg at 1.8 vs {r0:.4f} deg at 0 (<= 2x); {fmt}")


def test_criterion_07_crlb_consistency(verdict):
    spec = scenario_spec(100.0, 0.0)
    rows = monte_carlo("swf-sage", 100.0, 0.0)
    bound = crlb_report(spec).to_dict()["sqrt_crlb"]
    g = scenario_paths(spec.scenario, spec.sounding)[0].gain
    measured = {
        "gain": rmse([g * (10 ** (r["err_gain_db"] / 20) - 1) for r in rows]),
        "delay_ns": rmse([r["err_delay_ns"] for r in rows]),
        "az_deg": rmse([r["err_az_deg"] for r in rows]),
        "el_deg": rmse([r["err_el_deg"] for r in rows]),
    }
    ratios = {k: v / bound[k] for k, v in measured.items()}
    ok = all(q <= 2 for q in ratios.values())
    detail = ", ".join(f"{k} {measured[k]:.3g}/{bound[k]:.3g} = {q:.2f}" for k, q in ratios.items())
    # distance is barely identifiable at 100 m and inflates the full bound;
    # the known-distance bound is reported for context only
    known = crlb_report(spec, include_distance=False).to_dict()["sqrt_crlb"]
    context = ", ".join(f"{k} {measured[k] / known[k]:.2f}" for k in measured)
    assert verdict(7, ok, f"SWF RMSE/sqrt(CRLB) at 100 m (<= 2): {detail}; against the known-distance bound: {context}")


def test_criterion_08_near_field_ordering(verdict):
    near = {e: angle_rmse(monte_carlo(e, 5.0, 0.0)) for e in ("pwf-sage", "dss-o-sage")}
    far = {e: angle_rmse(monte_carlo(e, 100.0, 0.0)) for e in ("pwf-sage", "dss-o-sage")}
    q = far["pwf-sage"] / far["dss-o-sage"]
    ok = near["pwf-sage"] > near["dss-o-sage"] and 0.5 <= q <= 2
    assert verdict(
        8, ok,
        f"5 m: PWF {near['pwf-sage']:.4f} > DSS {near['dss-o-sage']:.4f} deg; "
        f"100 m: PWF {far['pwf-sage']:.4f}, DSS {far['dss-o-sage']:.4f} deg (ratio {q:.2f} within 2x)",
    )


# ---------------------------------------------------------------- oracles and invariants


def _brute_idft(plan, tau, i):
    k = np.arange(plan.K)
    f = plan.f1 + k * plan.delta_f
    return np.sum(np.exp(-2j * np.pi * f * tau) * np.exp(2j * np.pi * k * (i - 1) / plan.K)) / plan.K


def test_criterion_09_oracles(verdict):
    matched = sum(search_matches(k)[0] for k in range(20))
    plan = base_spec().sounding.kernel.plan
    rng = np.random.default_rng(9)
    idft = max(
        abs(vna_kernel(plan, tau, i) - _brute_idft(plan, tau, i))
        for tau, i in zip(rng.uniform(0, (plan.K - 1) * plan.delay_step, 100), rng.integers(1, plan.K + 1, 100))
    )
    cfg = simo_config()
    p = with_phases(single_path_scenario(10.0, cfg.f_center, cfg), phase_matrix(PhaseInstabilityModel(0, 1.0, 1), 0, *cfg.shape[:2]))
    n0 = 1e-14
    delays, gains = path_geometry(p, cfg)
    energy = sum(g**2 * np.sum(np.abs(cfg.kernel.response(t)) ** 2) for t, g in zip(delays[0], gains[0]))
    closed = n0 / (2 * energy)
    rel = abs(fim_gain_only(p, cfg, n0).bound("gain") / closed - 1)
    ok = matched == 20 and idft <= 1e-10 and rel <= 1e-3
    assert verdict(9, ok, f"search = exhaustive on {matched}/20; kernel vs IDFT {idft:.1e} (<= 1e-10); gain CRLB rel. error {rel:.1e} (<= 1e-3)")


def test_criterion_10_invariants(verdict):
    cfg = simo_config()
    kern = cfg.kernel
    taus = np.random.default_rng(10).uniform(0, (kern.plan.K - 1) * kern.plan.delay_step, 200)
    unit = float(np.max(np.abs(np.sum(np.abs(kern.response(taus)) ** 2, axis=-1) - 1)))

    small = simo_config(az=(0, 90, 10), el=(-10, 10, 10), f_start=299e9, f_stop=301e9, delta_f=5e6)
    ecfg = EstimatorConfig(max_paths=4, max_cycles=4)
    worst_drop = 0.0
    for k in range(50):
        tr = np.array(run_sage(random_scenario(small, k), ecfg, ("dss-o-sage", "swf-sage", "pwf-sage")[k % 3]).likelihood_trace)
        worst_drop = max(worst_drop, float(np.max(-np.diff(tr) / np.abs(tr[:-1]), initial=0.0)))
    monotone = worst_drop <= 1e-9

    a = with_phases(PathParams(1e-5, 40e-9, Direction.from_degrees(35, 5), d_rx=12.0), phase_matrix(PhaseInstabilityModel(0, 1.5, 2), 0, 1, 30))
    b = with_phases(PathParams(3e-6, 60e-9, Direction.from_degrees(75, -5), d_rx=20.0), phase_matrix(PhaseInstabilityModel(0, 1.5, 2), 1, 1, 30))
    h = synthesize([a, b], small, noise=NoiseModel(30, 2), phase=None)
    identity = bool(np.array_equal(e_step(h, [a, b], 0), h.data - reconstruct(b, small)))

    p = single_path_scenario(10.0, cfg.f_center, cfg)
    phase_err = 0.0
    for seed in range(5):
        t = synthesize([p], cfg, PhaseInstabilityModel(0, 1.8, seed), NoiseModel(30, seed))
        n_t, n_r, i_m = (int(v) for v in coarse_estimate(t.data))
        block = ([0], angle_window(cfg.rx_grid, n_r, cfg.rx_pattern, 1.5), sample_window(i_m, 10, kern.n_samples))
        rot = t.data * np.exp(1j * np.random.default_rng(seed).uniform(-np.pi, np.pi, (1, 180, 1)))
        v0 = lambda_prime(p, t.data, cfg, *block)
        phase_err = max(phase_err, abs(lambda_prime(p, rot, cfg, *block) / v0 - 1))

    f = cfg.f_center
    d = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
    planted = ci_fit([(x, fspl_db(1.0, f) + 10 * 2.6 * math.log10(x)) for x in d], f)[0]
    # end to end: noiseless single paths with PLE 2.6 gains through the estimator
    pts = []
    for x in d[:3]:
        q = PathParams(friis_gain(1.0, f) * x ** (-1.3), x / SPEED_OF_LIGHT, Direction.from_degrees(5, 5), d_rx=x)
        pts.append((x, path_loss(run_dss_o_sage(synthesize([q], cfg)).paths)))
    estimated = ci_fit(pts, f)[0]

    ok = unit <= 1e-9 and monotone and identity and phase_err <= 1e-12 and abs(planted - 2.6) <= 1e-9 and abs(estimated - 2.6) <= 0.02
    assert verdict(
        10, ok,
        f"unit energy err {unit:.1e}; likelihood drop {worst_drop:.1e} over 50 scenarios; E-step identity {identity}; "
        f"phase invariance {phase_err:.1e}; CI fit {planted:.9f} planted, {estimated:.4f} estimated (PLE 2.6)",
    )


def test_criterion_11_noise_elimination_contrast(verdict):
    cfg = simo_config()
    a = PathParams(1e-5, 30e-9, Direction.from_degrees(5, 5), d_rx=30e-9 * SPEED_OF_LIGHT)
    b = PathParams(1e-5 / math.sqrt(10), 50e-9, Direction.from_degrees(45, 5), d_rx=50e-9 * SPEED_OF_LIGHT)
    t = synthesize([a, b], cfg, PhaseInstabilityModel(0, 1.8, 1), NoiseModel(80, 1))
    dss = run_dss_o_sage(t).paths
    ne = run_noise_elimination(t).paths
    s_dss, s_ne, s_true = (delay_spread(x) * 1e9 for x in (dss, ne, [a, b]))
    count_ok = len(ne) >= 3 * len(dss)
    spread_ok = s_ne < s_dss
    assert verdict(
        11, count_ok and spread_ok,
        f"paths: noise-elim {len(ne)} vs DSS {len(dss)} (>= 3x: {count_ok}); delay spread noise-elim {s_ne:.3f} ns "
        f"vs DSS {s_dss:.3f} ns, true {s_true:.3f} ns (noise-elim < DSS: {spread_ok})",
    )
