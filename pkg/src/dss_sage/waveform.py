"""Delay-domain kernels of VNA and correlation sounders, and horn patterns."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import Direction, SPEED_OF_LIGHT, pointing_rotations, off_boresight, unit_vector

LN2 = math.log(2.0)


def g_K(x, K: int):
    """Dirichlet kernel sin(Kx) / (K sin x), with its limit where sin x = 0."""
    if K < 2:
        raise ValueError("K must be at least 2")
    x = np.asarray(x, dtype=float)
    s = np.sin(x)
    singular = np.abs(s) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(singular, 0.0, np.sin(K * x) / (K * np.where(singular, 1.0, s)))
    if np.any(singular):
        m = np.round(x / math.pi)
        out = np.where(singular, np.where(np.mod(m * (K - 1), 2) == 0, 1.0, -1.0), out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FrequencyPlan:
    """Uniform tone comb f_k = f1 + (k-1) delta_f, k = 1..K."""

    f1: float
    delta_f: float
    K: int

    def __post_init__(self):
        if not (self.f1 > 0 and self.delta_f > 0):
            raise ValueError("f1 and delta_f must be positive")
        if int(self.K) != self.K or self.K < 2:
            raise ValueError("K must be an integer >= 2")

    @classmethod
    def from_band(cls, f_start: float, f_stop: float, delta_f: float) -> "FrequencyPlan":
        K = int(round((f_stop - f_start) / delta_f)) + 1
        return cls(f_start, delta_f, K)

    @property
    def delay_step(self) -> float:
        return 1.0 / ((self.K - 1) * self.delta_f)

    @property
    def a(self) -> float:
        return 1.0 + self.delay_step * self.delta_f

    @property
    def bandwidth(self) -> float:
        return (self.K - 1) * self.delta_f

    @property
    def f_center(self) -> float:
        return self.f1 + 0.5 * self.bandwidth

    @property
    def f_stop(self) -> float:
        return self.f1 + self.bandwidth

    @property
    def frequencies(self) -> np.ndarray:
        return self.f1 + self.delta_f * np.arange(self.K)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_center


class VnaKernel:
    """IDFT of a unit-modulus tone comb delayed by tau.

    Sample ``i`` (0-based here, 1-based in :func:`vna_kernel`) peaks at delay
    ``i * delay_step / a``, i.e. ``i / (K delta_f)``.
    """

    kind = "vna"

    def __init__(self, plan: FrequencyPlan):
        self.plan = plan
        self.n_samples = plan.K
        self.delay_step = plan.delay_step
        self.sample_delays = np.arange(plan.K) / (plan.K * plan.delta_f)
        self.window = (plan.K - 1) * plan.delay_step
        # main lobe is two samples wide null-to-null
        self.mainlobe_width = 2.0 * self.delay_step

    def __eq__(self, other):
        return isinstance(other, VnaKernel) and other.plan == self.plan

    def response(self, tau, idx=None) -> np.ndarray:
        """R_tau[i] for every sample (or the ``idx`` subset); shape tau.shape + (I,)."""
        p = self.plan
        t = self.sample_delays if idx is None else self.sample_delays[np.asarray(idx)]
        tau = np.asarray(tau, dtype=float)[..., None]
        dt = tau - t
        phase = -2 * math.pi * p.f1 * tau - math.pi * (p.K - 1) * p.delta_f * dt
        return np.exp(1j * phase) * g_K(math.pi * p.delta_f * dt, p.K)

    def prepare(self, x: np.ndarray, idx: np.ndarray):
        """Pre-rotate windowed data for :meth:`correlate`."""
        p = self.plan
        t = self.sample_delays[idx]
        return np.asarray(x) * np.exp(-1j * math.pi * (p.K - 1) * p.delta_f * t)

    def correlate(self, tau, xt, idx, coherent=True):
        """Windowed matched-filter outputs for candidate delays.

        ``tau`` has shape (B, N), ``xt`` is :meth:`prepare` output of shape
        (N, W) for sample indices ``idx`` (W,). Returns
        ``z[b, n] = sum_w conj(R_tau[idx_w]) x[n, w]`` and the window energy
        ``sum_w |R_tau[idx_w]|^2``. With ``coherent=False`` the common
        carrier factor of ``z`` is dropped (only |z| is meaningful).
        """
        p = self.plan
        K = p.K
        tau = np.asarray(tau, dtype=float)
        idx = np.asarray(idx)
        u = math.pi * p.delta_f * tau
        v = math.pi * idx / K
        num = np.sin(K * u)[..., None] * np.where(idx % 2 == 0, 1.0, -1.0)
        den = np.sin(u)[..., None] * np.cos(v) - np.cos(u)[..., None] * np.sin(v)
        near = np.abs(den) < math.pi / K
        with np.errstate(divide="ignore", invalid="ignore"):
            g = num / (K * den)
        if near.any():
            x = (u[..., None] - v)[near]
            g[near] = g_K(x, K)
        z = np.einsum("...nw,nw->...n", g, xt)
        energy = np.einsum("...nw,...nw->...n", g, g)
        if coherent:
            z = z * np.exp(2j * math.pi * p.f_center * tau)
        return z, energy


def vna_kernel(plan: FrequencyPlan, tau, i):
    """R_tau[i] for the VNA sounder; ``i`` is 1-based as in the signal model."""
    i = np.asarray(i)
    if np.any(i < 1) or np.any(i > plan.K):
        raise ValueError("sample index out of range 1..K")
    kern = VnaKernel(plan)
    tau = np.asarray(tau, dtype=float)
    t = kern.sample_delays[i - 1]
    dt = tau - t
    phase = -2 * math.pi * plan.f1 * tau - math.pi * (plan.K - 1) * plan.delta_f * dt
    out = np.exp(1j * phase) * g_K(math.pi * plan.delta_f * dt, plan.K)
    return complex(out) if np.ndim(out) == 0 else out


class CorrelationKernel:
    """Sampled autocorrelation R_u on lags m * delay_step, m = -M..M."""

    kind = "correlation"

    def __init__(self, autocorrelation, delay_step: float, n_samples: int):
        r = np.asarray(autocorrelation, dtype=float)
        if r.ndim != 1 or len(r) % 2 == 0:
            raise ValueError("autocorrelation table must have odd length centred on lag 0")
        if delay_step <= 0 or n_samples < 2:
            raise ValueError("invalid correlation kernel dimensions")
        peak = r[len(r) // 2]
        if peak <= 0 or np.any(np.abs(r) > peak * (1 + 1e-12)):
            raise ValueError("autocorrelation must peak at lag 0")
        self.table = r / peak
        self.half = len(r) // 2
        self.delay_step = float(delay_step)
        self.n_samples = int(n_samples)
        self.sample_delays = np.arange(self.n_samples) * self.delay_step
        self.window = (self.n_samples - 1) * self.delay_step
        # first lag at or past a zero of the autocorrelation
        nz = np.flatnonzero(self.table[self.half + 1 :] <= 1e-12)
        first_null = (nz[0] + 1) if len(nz) else self.half
        self.mainlobe_width = 2.0 * first_null * self.delay_step

    @classmethod
    def sinc(cls, bandwidth: float, delay_step: float, n_samples: int, half_lags: int = 64):
        m = np.arange(-half_lags, half_lags + 1)
        return cls(np.sinc(bandwidth * m * delay_step), delay_step, n_samples)

    def __eq__(self, other):
        return (
            isinstance(other, CorrelationKernel)
            and other.delay_step == self.delay_step
            and other.n_samples == self.n_samples
            and np.array_equal(other.table, self.table)
        )

    def autocorrelation(self, lag):
        pos = np.asarray(lag, dtype=float) / self.delay_step + self.half
        grid = np.arange(len(self.table))
        return np.interp(pos, grid, self.table, left=0.0, right=0.0)

    def response(self, tau, idx=None):
        t = self.sample_delays if idx is None else self.sample_delays[np.asarray(idx)]
        tau = np.asarray(tau, dtype=float)[..., None]
        return self.autocorrelation(t - tau).astype(complex)

    def prepare(self, x, idx):
        return np.asarray(x)

    def correlate(self, tau, xt, idx, coherent=True):
        r = self.response(tau, idx).real
        return np.einsum("...nw,nw->...n", r, xt), np.einsum("...nw,...nw->...n", r, r)


def corr_kernel(kernel: CorrelationKernel, tau, i):
    """R_u((i-1) delay_step - tau) with linear interpolation; ``i`` is 1-based."""
    i = np.asarray(i)
    return kernel.autocorrelation((i - 1) * kernel.delay_step - np.asarray(tau, dtype=float))


@dataclass(frozen=True, eq=False)
class AntennaPattern:
    """Separable power pattern over pointing-frame azimuth/elevation offsets.

    ``kind`` is ``"gaussian"`` (main-beam model; infinite HPBW gives an
    isotropic element) or ``"tabulated"`` (bilinear in dB over a grid).
    """

    kind: str
    hpbw_az: float = math.inf
    hpbw_el: float = math.inf
    boresight_gain: float = 1.0
    table_az: np.ndarray | None = None
    table_el: np.ndarray | None = None
    table_db: np.ndarray | None = None
    _interp: object = field(default=None, repr=False)

    @classmethod
    def gaussian(cls, hpbw_az: float, hpbw_el: float | None = None, boresight_gain: float = 1.0):
        hpbw_el = hpbw_az if hpbw_el is None else hpbw_el
        if hpbw_az <= 0 or hpbw_el <= 0 or boresight_gain <= 0:
            raise ValueError("HPBW and boresight gain must be positive")
        return cls("gaussian", float(hpbw_az), float(hpbw_el), float(boresight_gain))

    @classmethod
    def isotropic(cls, gain: float = 1.0):
        return cls.gaussian(math.inf, math.inf, gain)

    @classmethod
    def tabulated(cls, az_deg, el_deg, gain_db):
        az = np.asarray(az_deg, dtype=float)
        el = np.asarray(el_deg, dtype=float)
        g = np.asarray(gain_db, dtype=float)
        if g.shape != (len(az), len(el)):
            raise ValueError("gain table must have shape (n_az, n_el)")
        if np.any(np.diff(az) <= 0) or np.any(np.diff(el) <= 0):
            raise ValueError("pattern axes must be strictly increasing")
        interp = RegularGridInterpolator(
            (np.radians(az), np.radians(el)), g, bounds_error=False, fill_value=-np.inf
        )
        bore = float(interp([[0.0, 0.0]])[0])
        if not np.isfinite(bore):
            raise ValueError("pattern table must cover boresight")
        if g.max() > bore + 1e-9:
            raise ValueError("pattern maximum must be at boresight")
        return cls("tabulated", math.nan, math.nan, 10 ** (bore / 10), az, el, g, interp)

    @classmethod
    def from_csv(cls, path):
        """Load ``az_deg,el_deg,gain_db`` rows forming a rectangular grid."""
        with open(Path(path), newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["az_deg", "el_deg", "gain_db"]:
                raise ValueError("pattern CSV header must be az_deg,el_deg,gain_db")
            rows = [(float(r["az_deg"]), float(r["el_deg"]), float(r["gain_db"])) for r in reader]
        if not rows:
            raise ValueError("empty pattern table")
        data = np.array(rows)
        az = np.unique(data[:, 0])
        el = np.unique(data[:, 1])
        if len(data) != len(az) * len(el):
            raise ValueError("pattern CSV is not a rectangular grid")
        g = np.full((len(az), len(el)), np.nan)
        g[np.searchsorted(az, data[:, 0]), np.searchsorted(el, data[:, 1])] = data[:, 2]
        if np.isnan(g).any():
            raise ValueError("pattern CSV has duplicate or missing grid points")
        return cls.tabulated(az, el, g)

    def power(self, d_az, d_el):
        """Linear power gain at pointing-frame offsets (radians)."""
        d_az = np.asarray(d_az, dtype=float)
        d_el = np.asarray(d_el, dtype=float)
        if self.kind == "gaussian":
            e = np.zeros(np.broadcast(d_az, d_el).shape)
            if math.isfinite(self.hpbw_az):
                e = e + d_az**2 / self.hpbw_az**2
            if math.isfinite(self.hpbw_el):
                e = e + d_el**2 / self.hpbw_el**2
            return self.boresight_gain * np.exp(-4 * LN2 * e)
        pts = np.stack(np.broadcast_arrays(d_az, d_el), axis=-1)
        return 10 ** (self._interp(pts).reshape(pts.shape[:-1]) / 10)

    def amplitude(self, d_az, d_el):
        return np.sqrt(self.power(d_az, d_el))

    @property
    def boresight_amplitude(self) -> float:
        return math.sqrt(self.boresight_gain)

    @property
    def hpbw(self) -> float:
        """Representative beamwidth used to size angular data windows."""
        if self.kind == "gaussian":
            return max(self.hpbw_az, self.hpbw_el)
        lin = 10 ** ((self.table_db - self.table_db.max()) / 10)
        j = int(np.argmin(np.abs(self.table_el)))
        above = self.table_az[lin[:, j] >= 0.5]
        return math.radians(above.max() - above.min()) if len(above) > 1 else math.radians(1.0)


def gaussian_gain(d_az, d_el, pattern: AntennaPattern):
    if pattern.kind != "gaussian":
        raise ValueError("gaussian_gain needs a gaussian pattern")
    return pattern.power(d_az, d_el)


def pattern_gain(pointing: Direction, incoming, pattern: AntennaPattern):
    """Amplitude gain toward unit vector ``incoming`` for a horn along ``pointing``."""
    v = np.asarray(incoming, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("incoming direction must be a unit vector")
    rot = pointing_rotations(np.array([[pointing.azimuth, pointing.elevation]]))
    d_az, d_el = off_boresight(rot, v[None, :])
    return float(pattern.amplitude(d_az, d_el)[0])


def boresight_vector(pointing: Direction) -> np.ndarray:
    return unit_vector(pointing)
