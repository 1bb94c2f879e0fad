"""Virtual spherical array geometry for direction-scan sounding.

All angles are radians internally. Positions are metres in a per-side local
frame whose origin is the rotator centre, which doubles as the reference
antenna position used to define the reference delay and angles of a path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .synth import PathParams

SPEED_OF_LIGHT = 299_792_458.0

TWO_PI = 2.0 * math.pi


def wrap_angle(x):
    """Wrap radians into (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    y = np.mod(x + math.pi, TWO_PI) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    # values already in range are returned untouched (no rounding from the shift)
    y = np.where((x > -math.pi) & (x <= math.pi), x, y)
    return float(y) if np.ndim(y) == 0 else y


def wrap_degrees(x):
    """Wrap degrees into (-180, 180]."""
    y = np.mod(np.asarray(x, dtype=float) + 180.0, 360.0) - 180.0
    y = np.where(y == -180.0, 180.0, y)
    return float(y) if np.ndim(y) == 0 else y


@dataclass(frozen=True)
class Direction:
    """Azimuth/elevation pair in radians.

    Azimuth is normalised into [0, 2*pi); an elevation outside
    [-pi/2, pi/2] is rejected rather than clamped.
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        az, el = float(self.azimuth), float(self.elevation)
        if not (math.isfinite(az) and math.isfinite(el)):
            raise ValueError("direction angles must be finite")
        if abs(el) > math.pi / 2 + 1e-12:
            raise ValueError(f"elevation {el!r} rad outside [-pi/2, pi/2]")
        az = az % TWO_PI
        if az >= TWO_PI:
            az = 0.0
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", max(-math.pi / 2, min(math.pi / 2, el)))

    @classmethod
    def from_degrees(cls, azimuth_deg: float, elevation_deg: float) -> "Direction":
        return cls(math.radians(azimuth_deg), math.radians(elevation_deg))

    @property
    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.azimuth), math.degrees(self.elevation)


@dataclass(frozen=True)
class RotatorGeometry:
    """Horn mounted on a rotator arm with horizontal and vertical offsets."""

    horizontal_radius: float
    vertical_radius: float = 0.0

    def __post_init__(self):
        if self.horizontal_radius < 0 or self.vertical_radius < 0:
            raise ValueError("rotator radii must be non-negative")
        if self.horizontal_radius == 0 and self.vertical_radius > 0:
            raise ValueError("zero horizontal radius with a vertical offset has no defined tilt")

    @property
    def radius(self) -> float:
        return math.hypot(self.horizontal_radius, self.vertical_radius)

    @property
    def elevation_offset(self) -> float:
        if self.horizontal_radius == 0:
            return 0.0
        return math.atan(self.vertical_radius / self.horizontal_radius)


@dataclass(frozen=True)
class ScanGrid:
    """Ordered scan directions of one side of the sounder.

    ``angles`` is an (N, 2) array of (azimuth, elevation) in radians. The
    rectangular constructor orders azimuth outer and elevation inner.
    """

    angles: np.ndarray
    azimuth_step: float
    elevation_step: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.angles, dtype=float))
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] == 0:
            raise ValueError("scan grid needs a non-empty (N, 2) angle array")
        if self.azimuth_step <= 0 or self.elevation_step <= 0:
            raise ValueError("scan steps must be positive")
        if np.any(np.abs(a[:, 1]) > math.pi / 2 + 1e-12):
            raise ValueError("scan elevation outside [-pi/2, pi/2]")
        a = a.copy()
        a[:, 0] = np.mod(a[:, 0], TWO_PI)
        key = np.round(np.column_stack([np.cos(a[:, 0]), np.sin(a[:, 0]), a[:, 1]]), 9)
        if len(np.unique(key, axis=0)) != len(a):
            raise ValueError("scan directions must be unique")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @classmethod
    def rectangular(cls, az_start, az_stop, az_step, el_start, el_stop, el_step, degrees=True):
        """Inclusive rectangular grid; with ``degrees`` all inputs are in degrees."""
        conv = math.radians if degrees else float
        n_az = int(round((az_stop - az_start) / az_step)) + 1
        n_el = int(round((el_stop - el_start) / el_step)) + 1
        if n_az < 1 or n_el < 1:
            raise ValueError("empty scan range")
        az = conv(az_start) + conv(az_step) * np.arange(n_az)
        el = conv(el_start) + conv(el_step) * np.arange(n_el)
        grid = np.array([(a, e) for a in az for e in el])
        return cls(grid, conv(az_step), conv(el_step))

    @classmethod
    def single(cls, direction: Direction = Direction(0.0, 0.0), step: float = TWO_PI):
        """Degenerate one-direction grid, e.g. a static Tx in SIMO sounding."""
        return cls(np.array([[direction.azimuth, direction.elevation]]), step, math.pi)

    def __len__(self):
        return len(self.angles)

    @property
    def azimuths(self) -> np.ndarray:
        return self.angles[:, 0]

    @property
    def elevations(self) -> np.ndarray:
        return self.angles[:, 1]

    def direction(self, n: int) -> Direction:
        return Direction(*self.angles[n])

    def neighbourhood(self, n: int, az_half_width: float, el_half_width: float) -> np.ndarray:
        """Indices strictly within the given angular half-widths of direction ``n``."""
        daz = np.abs(wrap_angle(self.azimuths - self.azimuths[n]))
        del_ = np.abs(self.elevations - self.elevations[n])
        return np.flatnonzero((daz < az_half_width) & (del_ < el_half_width))

    def extent(self) -> tuple[float, float, float, float]:
        """(az_min, az_span, el_min, el_max) of the grid padded by half a step."""
        el_lo = max(-math.pi / 2, float(self.elevations.min()) - self.elevation_step / 2)
        el_hi = min(math.pi / 2, float(self.elevations.max()) + self.elevation_step / 2)
        az = np.sort(self.azimuths)
        gaps = np.diff(np.concatenate([az, [az[0] + TWO_PI]]))
        if len(az) == 1:
            return float(az[0]) - self.azimuth_step / 2, self.azimuth_step, el_lo, el_hi
        k = int(np.argmax(gaps))
        if gaps[k] <= self.azimuth_step * 1.5:
            return 0.0, TWO_PI, el_lo, el_hi
        start = float(az[(k + 1) % len(az)])
        span = TWO_PI - float(gaps[k])
        return start - self.azimuth_step / 2, span + self.azimuth_step, el_lo, el_hi


def unit_vector(azimuth, elevation=None):
    """Cartesian unit vector(s) [cos az cos el, sin az cos el, sin el]."""
    if isinstance(azimuth, Direction):
        azimuth, elevation = azimuth.azimuth, azimuth.elevation
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    ce = np.cos(el)
    return np.stack([np.cos(az) * ce, np.sin(az) * ce, np.sin(el) * np.ones_like(az)], axis=-1)


def antenna_position(scan: Direction, geometry: RotatorGeometry) -> np.ndarray:
    """Phase-centre position of a horn pointing along ``scan``."""
    return antenna_positions(np.array([[scan.azimuth, scan.elevation]]), geometry)[0]


def antenna_positions(angles: np.ndarray, geometry: RotatorGeometry) -> np.ndarray:
    angles = np.atleast_2d(angles)
    r = geometry.radius
    if r == 0:
        return np.zeros((len(angles), 3))
    return r * unit_vector(angles[:, 0], angles[:, 1] + geometry.elevation_offset)


def scatter_position(ref, direction: Direction, distance: float) -> np.ndarray:
    if not distance > 0:
        raise ValueError("scatter distance must be positive")
    return np.asarray(ref, dtype=float) + distance * unit_vector(direction)


def rayleigh_distance(aperture: float, wavelength: float) -> float:
    if aperture <= 0 or wavelength <= 0:
        raise ValueError("aperture and wavelength must be positive")
    return 2.0 * aperture**2 / wavelength


def side_offsets(az, el, dist, positions, ref=None):
    """Observed delay offsets and arrival directions for one side of the link.

    Broadcasts candidate arrays ``az``, ``el``, ``dist`` of shape (B,) against
    antenna ``positions`` (N, 3). Returns ``(offset, direction)`` with the
    delay offset (seconds) relative to the reference position, shape (B, N),
    and the unit vector from each antenna toward the scatter, shape (B, N, 3).
    Infinite distances use the plane-wave limit.
    """
    az = np.atleast_1d(np.asarray(az, dtype=float))
    el = np.atleast_1d(np.asarray(el, dtype=float))
    dist = np.broadcast_to(np.asarray(dist, dtype=float), az.shape)
    pos = np.asarray(positions, dtype=float)
    if ref is not None:
        pos = pos - np.asarray(ref, dtype=float)
    omega = unit_vector(az, el)
    offset = np.empty((len(az), len(pos)))
    direction = np.empty((len(az), len(pos), 3))
    far = ~np.isfinite(dist)
    if far.any():
        offset[far] = -(omega[far] @ pos.T) / SPEED_OF_LIGHT
        direction[far] = omega[far][:, None, :]
    near = ~far
    if near.any():
        d = dist[near]
        if np.any(d <= 0):
            raise ValueError("scatter distance must be positive")
        v = (d[:, None] * omega[near])[:, None, :] - pos[None, :, :]
        norm = np.linalg.norm(v, axis=-1)
        if np.any(norm == 0):
            raise ValueError("antenna coincides with scatter")
        # |d w - p| - d without cancellation: (|p|^2 - 2 d w.p) / (|d w - p| + d)
        pp = np.sum(pos**2, axis=-1)
        wp = omega[near] @ pos.T
        offset[near] = (pp[None, :] - 2 * d[:, None] * wp) / (norm + d[:, None]) / SPEED_OF_LIGHT
        direction[near] = v / norm[..., None]
    return offset, direction


def _observed(path, tx_pos, rx_pos, refs, d_tx, d_rx):
    ref_tx, ref_rx = refs if refs is not None else (np.zeros(3), np.zeros(3))
    dod = path.dod if path.dod is not None else Direction(0.0, 0.0)
    off_t, dir_t = side_offsets(dod.azimuth, dod.elevation, d_tx, [tx_pos], ref_tx)
    off_r, dir_r = side_offsets(path.doa.azimuth, path.doa.elevation, d_rx, [rx_pos], ref_rx)
    return path.delay + off_t[0, 0] + off_r[0, 0], dir_t[0, 0], dir_r[0, 0]


def observed_geometry_swf(path: "PathParams", tx_pos, rx_pos, refs=None):
    """Delay, DoD and DoA seen by one antenna pair under a spherical wavefront.

    Infinite scatter distances fall back to the plane-wave limit on that side.
    """
    return _observed(path, tx_pos, rx_pos, refs, path.d_tx, path.d_rx)


def observed_geometry_ffa(path: "PathParams", tx_pos, rx_pos, refs=None):
    """Plane-wave counterpart of :func:`observed_geometry_swf`; distances ignored."""
    return _observed(path, tx_pos, rx_pos, refs, math.inf, math.inf)


def pointing_rotations(angles: np.ndarray) -> np.ndarray:
    """Rotation matrices taking global vectors into each pointing frame.

    In the pointing frame the boresight is +x and the local elevation axis +z.
    """
    angles = np.atleast_2d(angles)
    ca, sa = np.cos(angles[:, 0]), np.sin(angles[:, 0])
    ce, se = np.cos(angles[:, 1]), np.sin(angles[:, 1])
    rot = np.empty((len(angles), 3, 3))
    rot[:, 0] = np.stack([ca * ce, sa * ce, se], axis=-1)
    rot[:, 1] = np.stack([-sa, ca, np.zeros_like(ca)], axis=-1)
    rot[:, 2] = np.stack([-ca * se, -sa * se, ce], axis=-1)
    return rot


def off_boresight(rotations: np.ndarray, vectors: np.ndarray):
    """Azimuth/elevation offsets of unit ``vectors`` (..., N, 3) in N pointing frames."""
    local = np.einsum("nij,...nj->...ni", rotations, vectors)
    d_az = np.arctan2(local[..., 1], local[..., 0])
    d_el = np.arcsin(np.clip(local[..., 2], -1.0, 1.0))
    return d_az, d_el
