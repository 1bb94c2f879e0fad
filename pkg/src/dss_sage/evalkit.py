"""Accuracy metrics, numerical Fisher information, and channel statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import SPEED_OF_LIGHT, Direction, wrap_degrees

D_TH_A = 0.0184
D_TH_B_DEG = 10.773
D_TH_C = 1.4597

FIM_STEPS = {"gain": 1e-6, "delay": 1e-3, "angle": 1e-4, "distance": 1e-3, "phase": 1e-4}
COND_LIMIT = 1e12
PHASE_DROP = 1e-10


def rmse(errors, angular: bool = False) -> float:
    """Root of the mean squared error; ``angular`` wraps degrees into (-180, 180]."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("rmse needs at least one error")
    if angular:
        e = wrap_degrees(e)
    return float(np.sqrt(np.mean(np.square(e))))


def fpr(residual, true_gain: float, cfg=None, ecfg=None, mode: str = "dss-o-sage") -> float:
    """Fake power ratio: one fresh path estimate on ``residual`` against ``true_gain`` (dB)."""
    from .sage.estimators import m_step
    from .sage.model import EstimatorConfig

    data = residual.data if hasattr(residual, "data") else np.asarray(residual)
    cfg = cfg if cfg is not None else residual.config
    est = m_step(data, cfg, ecfg or EstimatorConfig(), mode)
    return fake_ratio_db(est.gain, true_gain)


def fake_ratio_db(fake_gain: float, true_gain: float) -> float:
    if true_gain <= 0:
        raise ValueError("true gain must be positive")
    if fake_gain <= 0:
        return -math.inf
    return 20 * math.log10(fake_gain / true_gain)


def mean_fpr_db(values) -> float:
    """Mean fake power over trials relative to the true power, in dB.

    Fake gains are averaged as powers (the true gain is fixed across trials),
    so a single ``-inf`` trial contributes zero power rather than dominating.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("mean_fpr_db needs at least one value")
    p = np.mean(np.power(10.0, v / 10))
    return float(10 * np.log10(p)) if p > 0 else -math.inf


def d_th(hpbw: float, r_vsa: float, wavelength: float) -> float:
    """Scatter-distance threshold below which plane-wave estimation degrades.

    ``hpbw`` in radians; ``a |ln(hpbw_deg / b)|^c * r_vsa / wavelength``
    with a = 0.0184, b = 10.773 deg, c = 1.4597.
    """
    if hpbw <= 0 or r_vsa <= 0 or wavelength <= 0:
        raise ValueError("d_th inputs must be positive")
    return D_TH_A * abs(math.log(math.degrees(hpbw) / D_TH_B_DEG)) ** D_TH_C * r_vsa / wavelength


def path_loss(paths) -> float:
    """-10 log10 of the summed path power (dB)."""
    g = np.array([p.gain if hasattr(p, "gain") else p for p in paths], dtype=float)
    if g.size == 0:
        raise ValueError("path loss needs at least one path")
    return float(-10 * np.log10(np.sum(g**2)))


def fspl_db(distance: float, frequency: float) -> float:
    return 20 * math.log10(4 * math.pi * frequency * distance / SPEED_OF_LIGHT)


def ci_fit(points, frequency: float, d0: float = 1.0):
    """Close-in reference path-loss fit; returns (PLE, RMS residual in dB)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d, pl = pts[:, 0], pts[:, 1]
    if len(np.unique(d)) < 2:
        raise ValueError("CI fit needs at least two distinct distances")
    x = 10 * np.log10(d / d0)
    y = pl - fspl_db(d0, frequency)
    n = float(np.dot(x, y) / np.dot(x, x))
    res = y - n * x
    return n, float(np.sqrt(np.mean(res**2)))


def _weights(paths):
    p = np.array([q.gain for q in paths], dtype=float) ** 2
    if p.size == 0 or p.sum() <= 0:
        raise ValueError("spreads need positive total power")
    return p / p.sum()


def delay_spread(paths) -> float:
    """Power-weighted RMS delay spread (seconds)."""
    w = _weights(paths)
    t = np.array([q.delay for q in paths])
    mu = np.dot(w, t)
    return float(math.sqrt(max(np.dot(w, (t - mu) ** 2), 0.0)))


def circular_spread_deg(angles_deg, weights) -> float:
    """Smallest weighted RMS spread over re-centrings at each sample angle."""
    a = np.asarray(angles_deg, dtype=float)
    w = np.asarray(weights, dtype=float)
    best = math.inf
    for ref in a:
        dev = wrap_degrees(a - ref)
        mu = np.dot(w, dev)
        dev = wrap_degrees(dev - mu)
        best = min(best, float(math.sqrt(max(np.dot(w, dev**2) - np.dot(w, dev) ** 2, 0.0))))
    return best


def asa(paths) -> float:
    """Azimuth spread of arrival (degrees), circular."""
    w = _weights(paths)
    return circular_spread_deg([q.doa.degrees[0] for q in paths], w)


def esa(paths) -> float:
    """Elevation spread of arrival (degrees), plain weighted RMS."""
    w = _weights(paths)
    e = np.array([q.doa.degrees[1] for q in paths])
    mu = np.dot(w, e)
    return float(math.sqrt(max(np.dot(w, (e - mu) ** 2), 0.0)))


@dataclass
class CrlbReport:
    """Fisher information of one or more paths.

    Parameter order per path: gain, delay, Rx azimuth, Rx elevation, Rx
    distance (when finite), then per-direction phases that carry
    information. ``crlb`` is ``None`` when the FIM is ill-conditioned.
    """

    fim: np.ndarray
    names: list
    n0: float
    condition: float
    crlb: np.ndarray | None
    flagged: bool
    dropped_phases: list = field(default_factory=list)

    def bound(self, name: str) -> float:
        if self.crlb is None:
            raise ValueError("FIM is ill-conditioned; no bound available")
        return float(self.crlb[self.names.index(name)])

    def to_dict(self) -> dict:
        out = {
            "names": self.names,
            "n0": self.n0,
            "condition": self.condition,
            "flagged": self.flagged,
            "dropped_phases": len(self.dropped_phases),
        }
        if self.crlb is not None:
            out["crlb"] = {n: float(v) for n, v in zip(self.names, self.crlb) if not n.startswith("phase")}
            out["sqrt_crlb"] = _readable_bounds(self.names, self.crlb)
        return out


def _readable_bounds(names, crlb) -> dict:
    out = {}
    for n, v in zip(names, crlb):
        base = n.split("[")[0]
        s = math.sqrt(max(v, 0.0))
        if base == "delay":
            out[n.replace("delay", "delay_ns")] = s * 1e9
        elif base in ("az", "el"):
            out[n.replace(base, base + "_deg")] = math.degrees(s)
        elif base == "dist":
            out[n.replace("dist", "dist_m")] = s
        elif base == "gain":
            out[n] = s
    return out


def _geometric_params(path, include_distance: bool):
    names = ["gain", "delay", "az", "el"]
    if include_distance and math.isfinite(path.d_rx):
        names.append("dist")
    return names


def _perturb(path, name: str, h: float):
    if name == "gain":
        return replace(path, gain=path.gain + h)
    if name == "delay":
        return replace(path, delay=path.delay + h)
    if name == "az":
        return replace(path, doa=Direction(path.doa.azimuth + h, path.doa.elevation))
    if name == "el":
        return replace(path, doa=Direction(path.doa.azimuth, path.doa.elevation + h))
    if name == "dist":
        return replace(path, d_rx=path.d_rx + h)
    raise KeyError(name)


def _step(path, name: str, kernel, scale: float) -> float:
    if name == "gain":
        return FIM_STEPS["gain"] * path.gain * scale
    if name == "delay":
        return FIM_STEPS["delay"] * kernel.delay_step * scale
    if name in ("az", "el"):
        return FIM_STEPS["angle"] * scale
    return FIM_STEPS["distance"] * scale


def fim_numeric(paths, cfg, n0: float, include_distance: bool = True, step_scale: float = 1.0) -> CrlbReport:
    """Fisher information ``(2/N0) Re{J^H J}`` by central differences.

    ``J`` holds derivatives of the noiseless tensor with respect to every
    parameter. Phase parameters only touch their own direction pair, so
    their columns are formed slice-wise.
    """
    from .sage.core import reconstruct

    if n0 <= 0:
        raise ValueError("noise variance must be positive")
    paths = list(paths)
    for p in paths:
        if p.phases is None:
            raise ValueError("paths need explicit per-direction phases for the FIM")
    base = [reconstruct(p, cfg) for p in paths]
    cols, names, phase_cols = [], [], []
    hp = FIM_STEPS["phase"] * step_scale
    for l, p in enumerate(paths):
        tag = f"[{l}]" if len(paths) > 1 else ""
        for name in _geometric_params(p, include_distance):
            h = _step(p, name, cfg.kernel, step_scale)
            d = (reconstruct(_perturb(p, name, h), cfg) - reconstruct(_perturb(p, name, -h), cfg)) / (2 * h)
            cols.append(d.reshape(-1))
            names.append(name + tag)
        s = base[l]
        n_t, n_r = s.shape[:2]
        for a in range(n_t):
            for b in range(n_r):
                sl = s[a, b]
                d = sl * ((np.exp(1j * hp) - np.exp(-1j * hp)) / (2 * hp))
                phase_cols.append((l, a, b, d, f"phase{tag}[{a},{b}]" if n_t > 1 else f"phase{tag}[{b}]"))
    G = np.array(cols) if cols else np.zeros((0, base[0].size))
    n_g = len(cols)
    n_i = base[0].shape[2]
    n_p = len(phase_cols)
    F = np.zeros((n_g + n_p, n_g + n_p))
    F[:n_g, :n_g] = np.real(np.conj(G) @ G.T)
    n_r_all = base[0].shape[1]
    for k, (l, a, b, d, _) in enumerate(phase_cols):
        off = (a * n_r_all + b) * n_i
        seg = G[:, off : off + n_i]
        F[:n_g, n_g + k] = np.real(np.conj(seg) @ d)
        F[n_g + k, :n_g] = F[:n_g, n_g + k]
    for k1, c1 in enumerate(phase_cols):
        for k2 in range(k1, n_p):
            c2 = phase_cols[k2]
            if (c1[1], c1[2]) == (c2[1], c2[2]):
                v = float(np.real(np.vdot(c1[3], c2[3])))
                F[n_g + k1, n_g + k2] = F[n_g + k2, n_g + k1] = v
    F *= 2.0 / n0
    names = names + [c[4] for c in phase_cols]
    diag_phase = np.diag(F)[n_g:]
    keep = list(range(n_g))
    dropped = []
    pmax = diag_phase.max() if n_p else 0.0
    for k in range(n_p):
        if diag_phase[k] > PHASE_DROP * pmax and diag_phase[k] > 0:
            keep.append(n_g + k)
        else:
            dropped.append(names[n_g + k])
    F = F[np.ix_(keep, keep)]
    names = [names[k] for k in keep]
    return _report(F, names, n0, dropped)


def _report(F, names, n0, dropped) -> CrlbReport:
    d = np.diag(F)
    if np.any(d <= 0):
        return CrlbReport(F, names, n0, math.inf, None, True, dropped)
    s = 1.0 / np.sqrt(d)
    Fn = F * s[:, None] * s[None, :]
    cond = float(np.linalg.cond(Fn))
    if not math.isfinite(cond) or cond > COND_LIMIT:
        return CrlbReport(F, names, n0, cond, None, True, dropped)
    inv = np.linalg.inv(Fn) * s[:, None] * s[None, :]
    return CrlbReport(F, names, n0, cond, np.diag(inv).copy(), False, dropped)


def fim_gain_only(path, cfg, n0: float, step_scale: float = 1.0) -> CrlbReport:
    """One-parameter FIM (gain only) by central differences."""
    from .sage.core import reconstruct

    h = _step(path, "gain", cfg.kernel, step_scale)
    d = (reconstruct(_perturb(path, "gain", h), cfg) - reconstruct(_perturb(path, "gain", -h), cfg)) / (2 * h)
    F = np.array([[2.0 / n0 * float(np.vdot(d, d).real)]])
    return _report(F, ["gain"], n0, [])


@dataclass
class SweepRecord:
    """Per-trial results of one sweep value for one estimator."""

    variable: str
    value: float
    estimator: str
    rows: list = field(default_factory=list)

    def errors(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows], dtype=float)

    def rmse(self, key: str) -> float:
        return rmse(self.errors(key), angular=key in ("err_az_deg",))
