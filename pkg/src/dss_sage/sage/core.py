"""E-step, likelihoods and closed-form M-step pieces (numpy reference versions)."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import Direction, off_boresight, side_offsets
from ..synth import CirTensor, SoundingConfig, path_geometry


def _data(tensor) -> np.ndarray:
    return tensor.data if isinstance(tensor, CirTensor) else np.asarray(tensor)


def reconstruct(path, cfg: SoundingConfig, wavefront: str = "swf") -> np.ndarray:
    """Noiseless signal s(theta) of one path or estimate over the full tensor."""
    delays, gains = path_geometry(path, cfg, wavefront)
    phases = path.phases if path.phases is not None else np.zeros(gains.shape)
    amp = path.gain * gains * np.exp(1j * np.asarray(phases))
    return amp[..., None] * cfg.kernel.response(delays)


def signal_sum(paths, cfg: SoundingConfig, wavefront: str = "swf", skip: int | None = None):
    out = np.zeros(cfg.shape, dtype=complex)
    for k, p in enumerate(paths):
        if k != skip:
            out += reconstruct(p, cfg, wavefront)
    return out


def global_log_likelihood(paths, tensor, cfg: SoundingConfig | None = None, wavefront: str = "swf") -> float:
    """-||h - s(Theta)||^2 with constants dropped."""
    cfg = cfg if cfg is not None else tensor.config
    h = _data(tensor)
    r = h - signal_sum(paths, cfg, wavefront)
    return -float(np.vdot(r, r).real)


def e_step(tensor, paths, l: int, cfg: SoundingConfig | None = None, wavefront: str = "swf"):
    """Signal estimate of path ``l``: data minus every other path's signal."""
    if not 0 <= l < max(len(paths), 1):
        raise IndexError("path index out of range")
    cfg = cfg if cfg is not None else tensor.config
    return _data(tensor) - signal_sum(paths, cfg, wavefront, skip=l)


def coarse_estimate(x_hat: np.ndarray):
    """Indices (n_t, n_r, i) of the strongest sample; lowest linear index on ties."""
    flat = int(np.argmax(np.abs(x_hat)))
    return np.unravel_index(flat, x_hat.shape)


def sample_window(i_m: int, half_width: int, n_samples: int) -> np.ndarray:
    return np.arange(max(0, i_m - half_width + 1), min(n_samples, i_m + half_width))


def angle_window(grid, n: int, pattern, factor: float) -> np.ndarray:
    """Scan directions within ``factor`` x HPBW of direction ``n``."""
    hw = factor * pattern.hpbw
    if not math.isfinite(hw):
        return np.arange(len(grid))
    return grid.neighbourhood(n, hw, hw)


def block_geometry(path, cfg: SoundingConfig, tx_dirs, rx_dirs, wavefront: str = "swf"):
    delays, gains = path_geometry(path, cfg, wavefront)
    ix = np.ix_(np.asarray(tx_dirs), np.asarray(rx_dirs))
    return delays[ix], gains[ix]


def lambda_prime(path, x_hat, cfg: SoundingConfig, tx_dirs, rx_dirs, samples, counters=None, wavefront="swf"):
    """Phase-free likelihood over a partial data block.

    ``(sum_n c_n |sum_i R*_tau_n[i] x[n, i]|)^2 / sum_{n,i} c_n^2 |R_tau_n[i]|^2``
    where ``c_n`` is the Tx x Rx amplitude gain of direction pair ``n``.
    """
    delays, gains = block_geometry(path, cfg, tx_dirs, rx_dirs, wavefront)
    samples = np.asarray(samples)
    r = cfg.kernel.response(delays, samples)
    x = np.asarray(x_hat)[np.ix_(np.asarray(tx_dirs), np.asarray(rx_dirs), samples)]
    z = np.sum(np.conj(r) * x, axis=-1)
    den = float(np.sum(gains[..., None] ** 2 * np.abs(r) ** 2))
    if counters is not None:
        counters.add(1, x.size)
    if den == 0:
        raise ZeroDivisionError("pattern gain vanishes over the whole partial window")
    return float(np.sum(gains * np.abs(z)) ** 2 / den)


def coherent_objective(path, x_hat, cfg: SoundingConfig, tx_dirs, rx_dirs, samples, wavefront="swf"):
    """|sum s* x|^2 / sum |s|^2 for a single global phase (plane/spherical baselines)."""
    delays, gains = block_geometry(path, cfg, tx_dirs, rx_dirs, wavefront)
    samples = np.asarray(samples)
    r = cfg.kernel.response(delays, samples)
    x = np.asarray(x_hat)[np.ix_(np.asarray(tx_dirs), np.asarray(rx_dirs), samples)]
    num = np.sum(gains[..., None] * np.conj(r) * x)
    den = float(np.sum(gains[..., None] ** 2 * np.abs(r) ** 2))
    if den == 0:
        raise ZeroDivisionError("pattern gain vanishes over the whole partial window")
    return float(abs(num) ** 2 / den)


def fine_delay(x_hat, coarse, cfg: SoundingConfig, delay_step: float, half_width: int, counters=None):
    """Observed delay at the strongest direction pair.

    Searches the grid ``tau' + k * delay_step`` strictly inside
    ``(tau' - Dtau, tau' + Dtau)`` where ``tau'`` is the delay of the
    strongest sample; only samples closer than ``half_width`` to it are
    used. The matched-filter magnitude is normalised by the kernel energy
    inside that window, which removes the pull of the truncated sidelobes.
    """
    n_t, n_r, i_m = coarse
    kern = cfg.kernel
    idx = sample_window(i_m, half_width, kern.n_samples)
    start = float(kern.sample_delays[i_m])
    n = int(math.ceil(kern.delay_step / delay_step)) - 1
    taus = start + delay_step * np.arange(-n, n + 1)
    taus = taus[np.abs(taus - start) < kern.delay_step]
    xt = kern.prepare(np.asarray(x_hat)[n_t, n_r, idx][None, :], idx)
    z, energy = kern.correlate(taus[:, None], xt, idx, coherent=False)
    if counters is not None:
        counters.add(len(taus), len(idx))
    score = np.abs(z[:, 0]) ** 2 / np.maximum(energy[:, 0], np.finfo(float).tiny)
    return float(taus[int(np.argmax(score))])


def side_geometry(az, el, dist, positions, rotations, pattern, ref_position):
    """Delay offsets relative to ``ref_position`` and amplitude gains, shape (B, N)."""
    pos = np.vstack([np.asarray(ref_position, dtype=float)[None, :], positions])
    off, dirs = side_offsets(az, el, dist, pos)
    rel = off[:, 1:] - off[:, :1]
    c = pattern.amplitude(*off_boresight(rotations, dirs[:, 1:]))
    return rel, c


def closed_form_gain_phase(x_hat, path, cfg: SoundingConfig, tx_dirs, rx_dirs, samples, wavefront="swf", coherent=False):
    """Gain, per-direction phases and per-direction correlations for fixed geometry.

    Correlations use the ``samples`` window in every direction pair; the
    gain sums only over the ``tx_dirs`` x ``rx_dirs`` block. With
    ``coherent`` a single global phase is fitted instead.
    """
    delays, gains = path_geometry(path, cfg, wavefront)
    samples = np.asarray(samples)
    kern = cfg.kernel
    r = kern.response(delays, samples)
    x = np.asarray(x_hat)[:, :, samples]
    corr = np.sum(x * np.conj(r), axis=-1)
    energy = np.sum(np.abs(r) ** 2, axis=-1)
    ix = np.ix_(np.asarray(tx_dirs), np.asarray(rx_dirs))
    den = float(np.sum(gains[ix] ** 2 * energy[ix]))
    if den == 0:
        return 0.0, np.zeros(gains.shape), corr
    if coherent:
        beta = np.sum(gains[ix] * corr[ix]) / den
        return float(abs(beta)), np.full(gains.shape, math.atan2(beta.imag, beta.real)), corr
    alpha = float(np.sum(gains[ix] * np.abs(corr[ix])) / den)
    return alpha, np.angle(corr), corr


def reference_delay(obs_delay: float, cfg: SoundingConfig, index, dod: Direction, doa: Direction, d_tx: float, d_rx: float) -> float:
    """Delay at the reference positions from the delay observed at scan pair ``index``."""
    n_t, n_r = index[0], index[1]
    off_t, _ = side_offsets(dod.azimuth, dod.elevation, d_tx, cfg.tx_positions[n_t : n_t + 1])
    off_r, _ = side_offsets(doa.azimuth, doa.elevation, d_rx, cfg.rx_positions[n_r : n_r + 1])
    return float(obs_delay - off_t[0, 0] - off_r[0, 0])

