"""M-step and SAGE iteration for the direction-scan estimator and its baselines."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import Direction, wrap_angle
from ..synth import CirTensor, friis_gain
from .core import (
    angle_window,
    closed_form_gain_phase,
    coarse_estimate,
    fine_delay,
    reconstruct,
    reference_delay,
    sample_window,
)
from .model import EstimationResult, EstimatorConfig, EvalCounters, PathEstimate
from .search import SideObjective, SideSearch, distance_bounds, full_region, local_region

ESTIMATORS = ("dss-o-sage", "pwf-sage", "swf-sage", "noise-elim")


def _mode_flags(mode: str, ecfg: EstimatorConfig):
    if mode == "dss-o-sage":
        return False, ecfg.wavefront == "swf"
    if mode == "pwf-sage":
        return True, False
    if mode == "swf-sage":
        return True, True
    raise ValueError(f"unknown estimator {mode!r}")


def full_delay_grid(kernel, step: float) -> np.ndarray:
    """Delay grid over the whole window, used without coarse estimation."""
    n = int(math.floor(kernel.window / step + 1e-9))
    return step * np.arange(n + 1)


def _full_data_delay(x_hat, n_t, n_r, cfg, ecfg, counters):
    kern = cfg.kernel
    idx = np.arange(kern.n_samples)
    taus = full_delay_grid(kern, ecfg.delay_step)
    xt = kern.prepare(np.asarray(x_hat)[n_t, n_r][None, :], idx)
    best, best_val = 0.0, -1.0
    for s in range(0, len(taus), ecfg.chunk):
        t = taus[s : s + ecfg.chunk]
        z, _ = kern.correlate(t[:, None], xt, idx, coherent=False)
        a = np.abs(z[:, 0])
        j = int(np.argmax(a))
        if a[j] > best_val:
            best, best_val = float(t[j]), float(a[j])
    counters.add(len(taus), len(idx))
    return best


def _side_search(x_hat, cfg, ecfg, side, idx_other, n_m, dirs, samples, tau_obs, coherent, use_distance, counters, accelerated):
    grid = cfg.rx_grid if side == "rx" else cfg.tx_grid
    x_slice = x_hat[idx_other] if side == "rx" else x_hat[:, idx_other]
    obj = SideObjective(cfg, side, n_m, x_slice, dirs, samples, tau_obs, coherent, counters, ecfg.chunk, guard=accelerated)
    region = local_region(grid, n_m) if accelerated else full_region(grid)
    bounds, far = distance_bounds(ecfg, cfg, side, tau_obs) if use_distance else (None, True)
    return SideSearch(obj, region, ecfg, bounds, far).run()


def m_step(x_hat, cfg, ecfg: EstimatorConfig, mode: str = "dss-o-sage", counters: EvalCounters | None = None) -> PathEstimate:
    """Estimate one path from its signal estimate ``x_hat`` (N_t, N_r, I)."""
    counters = counters if counters is not None else EvalCounters()
    coherent, use_distance = _mode_flags(mode, ecfg)
    x_hat = np.asarray(x_hat)
    n_tx, n_rx, n_i = x_hat.shape
    warnings = []
    with counters.timed():
        if ecfg.accelerated:
            n_t, n_r, i_m = (int(v) for v in coarse_estimate(x_hat))
            tau_obs = fine_delay(x_hat, (n_t, n_r, i_m), cfg, ecfg.delay_step, ecfg.delay_half_width, counters)
            samples = sample_window(i_m, ecfg.delay_half_width, n_i)
            rx_dirs = angle_window(cfg.rx_grid, n_r, cfg.rx_pattern, ecfg.angle_window_factor)
            tx_dirs = angle_window(cfg.tx_grid, n_t, cfg.tx_pattern, ecfg.angle_window_factor)
        else:
            power = np.sum(np.abs(x_hat) ** 2, axis=-1)
            n_t, n_r = (int(v) for v in np.unravel_index(int(np.argmax(power)), power.shape))
            i_m = int(np.argmax(np.abs(x_hat[n_t, n_r])))
            tau_obs = _full_data_delay(x_hat, n_t, n_r, cfg, ecfg, counters)
            samples = np.arange(n_i)
            rx_dirs, tx_dirs = np.arange(n_rx), np.arange(n_tx)

        doa, d_rx = Direction(*cfg.rx_grid.angles[n_r]), math.inf
        empty = False
        if n_rx > 1:
            res = _side_search(x_hat, cfg, ecfg, "rx", n_t, n_r, rx_dirs, samples, tau_obs, coherent, use_distance, counters, ecfg.accelerated)
            doa, d_rx = Direction(res.azimuth, res.elevation), res.distance
            warnings += res.warnings
            empty |= not res.value > 0
        dod, d_tx = Direction(*cfg.tx_grid.angles[n_t]), math.inf
        if n_tx > 1:
            res = _side_search(x_hat, cfg, ecfg, "tx", n_r, n_t, tx_dirs, samples, tau_obs, coherent, use_distance, counters, ecfg.accelerated)
            dod, d_tx = Direction(res.azimuth, res.elevation), res.distance
            warnings += res.warnings
            empty |= not res.value > 0

        tau = reference_delay(tau_obs, cfg, (n_t, n_r), dod, doa, d_tx, d_rx)
        est = PathEstimate(1.0, tau, doa, dod, d_tx, d_rx, np.zeros((n_tx, n_rx)), tau_obs, (n_t, n_r, i_m))
        gain, phases, _ = closed_form_gain_phase(x_hat, est, cfg, tx_dirs, rx_dirs, samples, coherent=coherent)
        if empty:
            # no feasible candidate: report no path
            gain = 0.0
            warnings.append("no feasible candidate in the local region")
        est.gain, est.phases, est.warnings = gain, phases, warnings
    return est


def alpha_threshold(source, mode: str = "relative", dynamic_range: float = 1000.0, distance: float | None = None) -> float:
    """Minimum path gain.

    ``friis``: free-space gain at ``distance`` maximised over the band
    (lowest tone), divided by ``dynamic_range``; ``source`` is a
    :class:`~dss_sage.synth.SoundingConfig` or tensor. ``relative``:
    ``source`` is the strongest gain (or a list of gains).
    """
    if mode == "friis":
        cfg = source.config if isinstance(source, CirTensor) else source
        if distance is None and isinstance(source, CirTensor):
            distance = source.meta.get("distance_m")
        if distance is None:
            raise ValueError("friis threshold needs the LoS distance")
        kern = cfg.kernel
        f_low = kern.plan.f1 if hasattr(kern, "plan") else cfg.f_center
        return friis_gain(distance, f_low) / dynamic_range
    if mode == "relative":
        strongest = float(np.max(source)) if np.ndim(source) else float(source)
        return strongest / dynamic_range
    if mode == "absolute":
        return float(source)
    raise ValueError(f"unknown threshold mode {mode!r}")


def _threshold(ecfg: EstimatorConfig, cfg, first_gain: float) -> float:
    if ecfg.threshold_mode == "relative":
        return alpha_threshold(first_gain, "relative", ecfg.dynamic_range)
    if ecfg.threshold_mode == "friis":
        return alpha_threshold(cfg, "friis", ecfg.dynamic_range, ecfg.threshold_value)
    return float(ecfg.threshold_value)


def _energy(r) -> float:
    return float(np.vdot(r, r).real)


def run_sage(tensor: CirTensor, ecfg: EstimatorConfig | None = None, mode: str = "dss-o-sage", cfg=None) -> EstimationResult:
    """SAGE loop shared by all model-based estimators.

    The first cycle estimates and subtracts paths until a gain falls below
    the threshold (that path is dropped). Each later cycle re-estimates
    every path from its E-step signal; an update is kept only when it does
    not increase the residual energy, so the likelihood never decreases.
    Iteration stops once the per-cycle gain in likelihood drops below
    ``convergence_ratio`` times its magnitude, or after ``max_cycles``.
    """
    ecfg = ecfg if ecfg is not None else EstimatorConfig()
    cfg = cfg if cfg is not None else tensor.config
    wavefront = "swf"
    h = np.asarray(tensor.data)
    counters = EvalCounters()
    paths, signals = [], []
    residual = h.copy()
    threshold = None
    while len(paths) < ecfg.max_paths:
        est = m_step(residual, cfg, ecfg, mode, counters)
        if threshold is None:
            threshold = _threshold(ecfg, cfg, est.gain)
        if est.gain < threshold or est.gain == 0:
            break
        s = reconstruct(est, cfg, wavefront)
        paths.append(est)
        signals.append(s)
        residual = residual - s
    trace = [-_energy(residual)]
    converged = False
    cycles = 1
    while cycles < ecfg.max_cycles and paths:
        cycles += 1
        for l in range(len(paths)):
            x_hat = residual + signals[l]
            new = m_step(x_hat, cfg, ecfg, mode, counters)
            s_new = reconstruct(new, cfg, wavefront)
            r_new = x_hat - s_new
            if _energy(r_new) <= _energy(residual):
                new.updated_cycle = cycles - 1
                paths[l], signals[l], residual = new, s_new, r_new
        trace.append(-_energy(residual))
        if trace[-1] - trace[-2] < ecfg.convergence_ratio * abs(trace[-2]):
            converged = True
            break
    keep = [k for k, p in enumerate(paths) if p.gain >= threshold]
    return EstimationResult(
        [paths[k] for k in keep], trace, counters, converged, cycles, mode, threshold or 0.0
    )


def run_dss_o_sage(tensor, ecfg=None, cfg=None) -> EstimationResult:
    return run_sage(tensor, ecfg, "dss-o-sage", cfg)


def run_pwf_sage(tensor, ecfg=None, cfg=None) -> EstimationResult:
    return run_sage(tensor, ecfg, "pwf-sage", cfg)


def run_swf_sage(tensor, ecfg=None, cfg=None) -> EstimationResult:
    return run_sage(tensor, ecfg, "swf-sage", cfg)


def run_noise_elimination(tensor, ecfg=None, cfg=None) -> EstimationResult:
    """Every sample at or above the gain threshold becomes a path."""
    ecfg = ecfg if ecfg is not None else EstimatorConfig()
    cfg = cfg if cfg is not None else tensor.config
    h = np.asarray(tensor.data)
    mag = np.abs(h)
    threshold = _threshold(ecfg, cfg, float(mag.max()) if mag.size else 0.0)
    kern = cfg.kernel
    n_tx, n_rx, _ = h.shape
    paths = []
    for n_t, n_r, i in zip(*np.nonzero(mag >= threshold)):
        if mag[n_t, n_r, i] == 0:
            continue
        ph = np.zeros((n_tx, n_rx))
        ph[n_t, n_r] = wrap_angle(np.angle(h[n_t, n_r, i]))
        paths.append(
            PathEstimate(
                float(mag[n_t, n_r, i]),
                float(kern.sample_delays[i]),
                Direction(*cfg.rx_grid.angles[n_r]),
                Direction(*cfg.tx_grid.angles[n_t]),
                math.inf,
                math.inf,
                ph,
                float(kern.sample_delays[i]),
                (int(n_t), int(n_r), int(i)),
            )
        )
    return EstimationResult(paths, [], EvalCounters(), True, 1, "noise-elim", threshold)


RUNNERS = {
    "dss-o-sage": run_dss_o_sage,
    "pwf-sage": run_pwf_sage,
    "swf-sage": run_swf_sage,
    "noise-elim": run_noise_elimination,
}


def run_estimator(name: str, tensor, ecfg=None, cfg=None) -> EstimationResult:
    if name not in RUNNERS:
        raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
    return RUNNERS[name](tensor, ecfg, cfg)
