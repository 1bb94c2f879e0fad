"""Synthetic direction-scan CIR tensors, plus the CIRT binary format."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    Direction,
    RotatorGeometry,
    ScanGrid,
    antenna_positions,
    off_boresight,
    pointing_rotations,
    side_offsets,
    wrap_angle,
)
from .waveform import AntennaPattern, CorrelationKernel, FrequencyPlan, VnaKernel

PHASE_STREAM = 1
NOISE_STREAM = 2
GUARD_MAINLOBES = 5


class PathOutsideWindowError(ValueError):
    pass


class CirtFormatError(ValueError):
    pass


@dataclass
class PathParams:
    """One propagation path referenced to the rotator centres.

    ``phases`` optionally fixes the per-direction phase instability as an
    (N_t, N_r) array; otherwise a :class:`PhaseInstabilityModel` fills it.
    """

    gain: float
    delay: float
    doa: Direction
    dod: Direction | None = None
    d_tx: float = math.inf
    d_rx: float = math.inf
    phases: np.ndarray | None = None

    def __post_init__(self):
        if not self.gain >= 0:
            raise ValueError("path gain must be non-negative")
        if not self.delay >= 0:
            raise ValueError("path delay must be non-negative")
        for d in (self.d_tx, self.d_rx):
            if not (d > 0 or d == math.inf):
                raise ValueError("scatter distances must be positive or inf")


@dataclass(frozen=True)
class PhaseInstabilityModel:
    mean: float = 0.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("phase sigma must be non-negative")


@dataclass(frozen=True)
class NoiseModel:
    snr_db: float = math.inf
    seed: int = 0


@dataclass(frozen=True)
class SoundingConfig:
    """Scan grids, rotators, horn patterns and delay kernel of a sounder."""

    rx_grid: ScanGrid
    rx_geometry: RotatorGeometry
    rx_pattern: AntennaPattern
    kernel: VnaKernel | CorrelationKernel
    tx_grid: ScanGrid = field(default_factory=ScanGrid.single)
    tx_geometry: RotatorGeometry = RotatorGeometry(0.0)
    tx_pattern: AntennaPattern = field(default_factory=AntennaPattern.isotropic)
    carrier_frequency: float | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.tx_grid), len(self.rx_grid), self.kernel.n_samples

    @property
    def f_center(self) -> float:
        if self.carrier_frequency is not None:
            return self.carrier_frequency
        if isinstance(self.kernel, VnaKernel):
            return self.kernel.plan.f_center
        raise ValueError("correlation sounder needs an explicit carrier frequency")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_center

    @property
    def tx_positions(self) -> np.ndarray:
        return antenna_positions(self.tx_grid.angles, self.tx_geometry)

    @property
    def rx_positions(self) -> np.ndarray:
        return antenna_positions(self.rx_grid.angles, self.rx_geometry)

    @property
    def peak_gain(self) -> float:
        """Product of boresight amplitude gains."""
        return self.tx_pattern.boresight_amplitude * self.rx_pattern.boresight_amplitude

    def delay_bounds(self) -> tuple[float, float]:
        guard = GUARD_MAINLOBES * self.kernel.mainlobe_width
        return guard, self.kernel.window - guard


@dataclass
class CirTensor:
    data: np.ndarray
    config: SoundingConfig | None = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.data.shape


def simo_config(
    rotator_radius: float = 0.2,
    hpbw_deg: float = 8.0,
    f_start: float = 298e9,
    f_stop: float = 302e9,
    delta_f: float = 2e6,
    az=(0.0, 350.0, 10.0),
    el=(-20.0, 20.0, 10.0),
    boresight_gain: float = 1.0,
) -> SoundingConfig:
    """Rx-scanning sounder with a static isotropic Tx.

    Defaults: 36 x 5 scan directions, 2001 tones over 298-302 GHz, 8 deg
    horn, rotator arm split equally between horizontal and vertical offset.
    """
    plan = FrequencyPlan.from_band(f_start, f_stop, delta_f)
    r = rotator_radius / math.sqrt(2.0)
    return SoundingConfig(
        rx_grid=ScanGrid.rectangular(*az, *el),
        rx_geometry=RotatorGeometry(r, r),
        rx_pattern=AntennaPattern.gaussian(math.radians(hpbw_deg), boresight_gain=boresight_gain),
        kernel=VnaKernel(plan),
    )


def friis_gain(distance: float, frequency: float) -> float:
    """Free-space amplitude gain c / (4 pi f d)."""
    if distance <= 0 or frequency <= 0:
        raise ValueError("distance and frequency must be positive")
    return SPEED_OF_LIGHT / (4 * math.pi * frequency * distance)


def single_path_scenario(d: float, f_center: float, cfg: SoundingConfig) -> PathParams:
    """LoS-like path at distance ``d`` arriving midway between scan directions."""
    if not d > 0:
        raise ValueError("distance must be positive")
    g = cfg.rx_grid
    doa = Direction(g.azimuth_step / 2, g.elevation_step / 2)
    return PathParams(
        gain=friis_gain(d, f_center),
        delay=d / SPEED_OF_LIGHT,
        doa=doa,
        dod=Direction(0.0, 0.0),
        d_tx=math.inf,
        d_rx=d,
    )


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, key)]))


def standard_phase_draw(seed: int, l: int, n_t: int, n_r: int) -> float:
    return float(_rng(seed, PHASE_STREAM, l, n_t, n_r).standard_normal())


def gen_phases(model: PhaseInstabilityModel, l: int, n_t: int, n_r: int) -> float:
    """Phase of path ``l`` at scan pair (n_t, n_r), keyed by (seed, l, n_t, n_r)."""
    if model.sigma == 0:
        return float(wrap_angle(model.mean))
    z = standard_phase_draw(model.seed, l, n_t, n_r)
    return float(wrap_angle(model.mean + model.sigma * z))


def phase_matrix(model: PhaseInstabilityModel | None, l: int, n_tx: int, n_rx: int) -> np.ndarray:
    if model is None:
        return np.zeros((n_tx, n_rx))
    if model.sigma == 0:
        return np.full((n_tx, n_rx), wrap_angle(model.mean))
    z = np.array(
        [[standard_phase_draw(model.seed, l, t, r) for r in range(n_rx)] for t in range(n_tx)]
    )
    return wrap_angle(model.mean + model.sigma * z)


def path_geometry(path: PathParams, cfg: SoundingConfig, wavefront: str = "swf"):
    """Per-direction observed delays (N_t, N_r) and amplitude gains (N_t, N_r)."""
    if wavefront not in ("swf", "ffa"):
        raise ValueError("wavefront must be 'swf' or 'ffa'")
    dod = path.dod if path.dod is not None else Direction(0.0, 0.0)
    d_tx = path.d_tx if wavefront == "swf" else math.inf
    d_rx = path.d_rx if wavefront == "swf" else math.inf
    off_t, dir_t = side_offsets(dod.azimuth, dod.elevation, d_tx, cfg.tx_positions)
    off_r, dir_r = side_offsets(path.doa.azimuth, path.doa.elevation, d_rx, cfg.rx_positions)
    c_t = cfg.tx_pattern.amplitude(*off_boresight(pointing_rotations(cfg.tx_grid.angles), dir_t[0]))
    c_r = cfg.rx_pattern.amplitude(*off_boresight(pointing_rotations(cfg.rx_grid.angles), dir_r[0]))
    delays = path.delay + off_t[0][:, None] + off_r[0][None, :]
    return delays, c_t[:, None] * c_r[None, :]


def path_signal(path: PathParams, cfg: SoundingConfig, phases=None, wavefront: str = "swf"):
    """Noiseless contribution of one path, shape (N_t, N_r, I)."""
    delays, gains = path_geometry(path, cfg, wavefront)
    lo, hi = cfg.delay_bounds()
    if delays.min() < lo or delays.max() > hi:
        raise PathOutsideWindowError(
            f"observed delays [{delays.min():.4e}, {delays.max():.4e}] s outside [{lo:.4e}, {hi:.4e}] s"
        )
    if phases is None:
        phases = path.phases if path.phases is not None else np.zeros(gains.shape)
    phases = np.asarray(phases, dtype=float)
    if phases.shape != gains.shape:
        raise ValueError(f"phase array shape {phases.shape} != {gains.shape}")
    amp = path.gain * gains * np.exp(1j * phases)
    return amp[..., None] * cfg.kernel.response(delays)


def synthesize(
    paths,
    cfg: SoundingConfig,
    phase: PhaseInstabilityModel | None = None,
    noise: NoiseModel | None = None,
    wavefront: str = "swf",
) -> CirTensor:
    """Sum of path signals plus optional noise.

    Paths without explicit ``phases`` draw them from ``phase`` keyed by their
    list position.
    """
    data = np.zeros(cfg.shape, dtype=complex)
    n_t, n_r, _ = cfg.shape
    for l, p in enumerate(paths):
        ph = p.phases if p.phases is not None else phase_matrix(phase, l, n_t, n_r)
        data += path_signal(p, cfg, ph, wavefront)
    peak = max((p.gain for p in paths), default=0.0) ** 2 * cfg.peak_gain**2
    meta = {
        "peak_power": peak,
        "wavefront": wavefront,
        "phase_seed": None if phase is None else phase.seed,
        "phase_sigma": None if phase is None else phase.sigma,
        "noise_seed": None,
        "snr_db": None,
    }
    t = CirTensor(data, cfg, meta)
    if noise is not None:
        t = add_noise(t, noise)
    return t


def noise_variance(snr_db: float, peak_power: float) -> float:
    if snr_db == math.inf:
        return 0.0
    return peak_power / 10 ** (snr_db / 10)


def add_noise(t: CirTensor, model: NoiseModel, reference_power: float | None = None) -> CirTensor:
    """Add circular complex Gaussian noise keyed per (seed, n_t, n_r) row."""
    if model.snr_db == math.inf:
        return t
    p = reference_power if reference_power is not None else t.meta.get("peak_power")
    if p is None:
        raise ValueError("noise needs a reference peak power")
    var = noise_variance(model.snr_db, p)
    n_t, n_r, n_i = t.data.shape
    w = np.empty(t.data.shape, dtype=complex)
    scale = math.sqrt(var / 2)
    for a in range(n_t):
        for b in range(n_r):
            g = _rng(model.seed, NOISE_STREAM, a, b).standard_normal(2 * n_i)
            w[a, b] = scale * (g[:n_i] + 1j * g[n_i:])
    meta = dict(t.meta, noise_seed=model.seed, snr_db=model.snr_db, noise_variance=var)
    return CirTensor(t.data + w, t.config, meta)


_MAGIC = b"CIRT"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_tensor(t: CirTensor, path) -> None:
    """Write the CIRT payload and a JSON sidecar with config and provenance."""
    from .config import sounding_to_dict

    n_t, n_r, n_i = t.data.shape
    path = Path(path)
    payload = np.ascontiguousarray(t.data, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n_t, n_r, n_i))
        fh.write(payload)
    side = {"meta": t.meta}
    if t.config is not None:
        side["sounding"] = sounding_to_dict(t.config)
    sidecar_path(path).write_text(json.dumps(side, indent=1, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def load_tensor(path) -> CirTensor:
    from .config import sounding_from_dict

    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CirtFormatError("truncated header")
    magic, version, n_t, n_r, n_i = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CirtFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise CirtFormatError(f"unsupported CIRT version {version}")
    count = n_t * n_r * n_i
    if count * 16 > 2**40:
        raise CirtFormatError("tensor dimensions overflow")
    if len(raw) != _HEADER.size + 16 * count:
        raise CirtFormatError(f"payload size {len(raw) - _HEADER.size} != {16 * count}")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).astype(complex).reshape(n_t, n_r, n_i)
    cfg, meta = None, {}
    side = sidecar_path(path)
    if side.exists():
        doc = json.loads(side.read_text())
        meta = doc.get("meta", {})
        if "sounding" in doc:
            cfg = sounding_from_dict(doc["sounding"])
            if cfg.shape != data.shape:
                raise CirtFormatError(f"sidecar shape {cfg.shape} != payload {data.shape}")
    return CirTensor(data, cfg, meta)


def with_phases(path: PathParams, phases) -> PathParams:
    return replace(path, phases=np.asarray(phases, dtype=float))
