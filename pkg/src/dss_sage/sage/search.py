"""Two-phase grid search over one side's angles and scatter distance.

The coarse phase evaluates every point of a coarse lattice over the local
region. The fine phase works on the fine lattice (which contains the coarse
one). Distance is profiled out at every fine angle point: coarse distance
scan, fine refinement within one coarse step, comparison with d = inf.
Spherical geometry couples elevation and distance along a narrow ridge,
and profiling removes it. A compass search over the 8-neighbour angle
stencil then walks the profiled objective from the coarse optimum, with a
stride halving down to one fine step and moves only on strict improvement.
Ties are broken by lowest index everywhere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..geometry import SPEED_OF_LIGHT, off_boresight, pointing_rotations, rayleigh_distance, side_offsets
from . import fastobj
from .core import side_geometry

EPS = 1e-9


@dataclass(frozen=True)
class Lattice:
    """Integer lattice ``anchor + k * step`` for ``k_min <= k <= k_max``."""

    anchor: float
    step: float
    k_min: int
    k_max: int

    @classmethod
    def over(cls, anchor, step, lo, hi):
        return cls(anchor, step, math.ceil((lo - anchor) / step - EPS), math.floor((hi - anchor) / step + EPS))

    def values(self, k):
        return self.anchor + self.step * np.asarray(k, dtype=float)

    @property
    def size(self) -> int:
        return max(0, self.k_max - self.k_min + 1)


@dataclass(frozen=True)
class Region:
    """Angular search region: centre, inclusive bounds, full-circle flag."""

    az_anchor: float
    az_lo: float
    az_hi: float
    el_anchor: float
    el_lo: float
    el_hi: float
    clipped: bool = False


def local_region(grid, n_m: int) -> Region:
    """Coarse direction +- half a scan step, elevation clipped to +-90 deg."""
    az, el = grid.angles[n_m]
    haz, hel = grid.azimuth_step / 2, grid.elevation_step / 2
    lo, hi = el - hel, el + hel
    clipped = lo < -math.pi / 2 or hi > math.pi / 2
    return Region(az, az - haz, az + haz, el, max(lo, -math.pi / 2), min(hi, math.pi / 2), clipped)


def full_region(grid) -> Region:
    """Whole scanned extent, used by the unaccelerated baselines."""
    az0, span, el_lo, el_hi = grid.extent()
    az_hi = az0 + span
    if span >= 2 * math.pi - EPS:
        az_hi = az0 + 2 * math.pi - EPS
    return Region(az0, az0, az_hi, el_lo, el_lo, el_hi)


def d_threshold(hpbw: float, r_vsa: float, wavelength: float) -> float:
    from ..evalkit import d_th

    return d_th(hpbw, r_vsa, wavelength)


def distance_bounds(ecfg, scfg, side: str, tau_obs: float):
    """Finite scatter-distance interval and whether d = inf is a candidate.

    Returns ``(bounds, far)``; ``bounds`` is ``None`` when no finite
    distance is searched. The interval runs from ``dist_min`` to the
    largest of 4 d_th, 50 m and the Rayleigh distance of the virtual
    array, capped at the path length c * tau_obs since a scatter cannot be
    farther than the whole path. The plane-wave candidate is kept only
    when that cap does not bind, i.e. when a scatter beyond the finite
    grid is physically possible.
    """
    geom = scfg.rx_geometry if side == "rx" else scfg.tx_geometry
    pattern = scfg.rx_pattern if side == "rx" else scfg.tx_pattern
    if geom.radius == 0:
        return None, True
    if ecfg.dist_bounds is not None:
        return tuple(ecfg.dist_bounds), ecfg.far_candidate
    lam = scfg.wavelength
    hpbw = pattern.hpbw
    dth = d_threshold(hpbw, geom.radius, lam) if math.isfinite(hpbw) else 0.0
    hi = max(4 * dth, 50.0, rayleigh_distance(2 * geom.radius, lam))
    cap = SPEED_OF_LIGHT * tau_obs + geom.radius
    far = cap > hi
    hi = min(hi, cap)
    if hi <= ecfg.dist_min:
        return None, True
    return (ecfg.dist_min, hi), far


class SideObjective:
    """Objective over candidate (az, el, dist) for one side of the link.

    ``x_slice`` holds the data of that side's scan directions (other side
    fixed) as an (N_side, I) array; ``dirs`` and ``samples`` select the
    partial window; delays are anchored so that direction ``n_m`` sees
    ``tau_obs``.

    With ``guard`` a candidate scores 0 unless the antenna of direction
    ``n_m`` sees it within one scan step of its boresight. The objective is
    invariant to a common scale of the pattern gains, so without the guard
    a near scatter seen far off every beam can fit a noise sample and
    return a gain inflated by the inverse pattern gain. Plane-wave
    candidates inside the local region always pass.
    """

    def __init__(self, scfg, side, n_m, x_slice, dirs, samples, tau_obs, coherent, counters, chunk=32768, fast=True, guard=False):
        grid = scfg.rx_grid if side == "rx" else scfg.tx_grid
        geom_pos = scfg.rx_positions if side == "rx" else scfg.tx_positions
        self.pattern = scfg.rx_pattern if side == "rx" else scfg.tx_pattern
        self.kernel = scfg.kernel
        self.dirs = np.asarray(dirs)
        self.samples = np.asarray(samples)
        self.positions = np.ascontiguousarray(geom_pos[self.dirs])
        self.ref = np.ascontiguousarray(geom_pos[n_m])
        self.rotations = np.ascontiguousarray(pointing_rotations(grid.angles[self.dirs]))
        self.guard = bool(guard)
        self._ref_rot = pointing_rotations(grid.angles[[n_m]])
        self._limits = (grid.azimuth_step * (1 + EPS), grid.elevation_step * (1 + EPS))
        self.xt = self.kernel.prepare(np.asarray(x_slice)[self.dirs][:, self.samples], self.samples)
        self.tau_obs = float(tau_obs)
        self.coherent = bool(coherent)
        self.counters = counters
        self.chunk = int(chunk)
        self.fast = fast and fastobj.supported(self.kernel, self.pattern, self.samples)
        self.elements = len(self.dirs) * len(self.samples)
        if self.fast:
            self._xr = np.ascontiguousarray(self.xt.real)
            self._xi = np.ascontiguousarray(self.xt.imag)
            self._coef = fastobj.gaussian_coefficients(self.pattern)
            p = self.kernel.plan
            self._plan = (math.pi * p.delta_f, p.K, 2 * math.pi * p.f_center)

    def __call__(self, az, el, dist) -> np.ndarray:
        az, el, dist = np.broadcast_arrays(
            np.atleast_1d(np.asarray(az, float)), np.asarray(el, float), np.asarray(dist, float)
        )
        az, el, dist = (np.ascontiguousarray(a) for a in (az, el, dist))
        out = np.empty(len(az))
        for s in range(0, len(az), self.chunk):
            sl = slice(s, s + self.chunk)
            out[sl] = self._eval(az[sl], el[sl], dist[sl])
        out = self._masked(out, az, el, dist)
        if self.counters is not None:
            self.counters.add(len(az), self.elements)
        return out

    def _eval(self, az, el, dist):
        if self.fast:
            out = np.empty(len(az))
            pidf, K, tpf = self._plan
            fastobj.batch_objective(
                az, el, dist, self.positions, self.ref, self.rotations, *self._coef,
                self.tau_obs, self._xr, self._xi, int(self.samples[0]), pidf, int(K), tpf,
                self.coherent, out,
            )
            return out
        return self._numpy(az, el, dist)

    def feasible(self, az, el, dist) -> np.ndarray:
        """Candidates seen by the ``n_m`` antenna within one scan step of boresight."""
        _, dirs = side_offsets(az, el, dist, self.ref[None, :])
        d_az, d_el = off_boresight(self._ref_rot, dirs)
        return (np.abs(d_az[:, 0]) <= self._limits[0]) & (np.abs(d_el[:, 0]) <= self._limits[1])

    def _masked(self, vals, az, el, dist):
        if not self.guard:
            return vals
        return np.where(self.feasible(az, el, dist), vals, 0.0)

    def reference(self, az, el, dist):
        """Plain numpy evaluation, independent of the fused kernel."""
        az, el, dist = np.broadcast_arrays(np.atleast_1d(np.asarray(az, float)), np.asarray(el, float), np.asarray(dist, float))
        return self._masked(self._numpy(az, el, dist), az, el, dist)

    def _numpy(self, az, el, dist):
        rel, c = side_geometry(az, el, dist, self.positions, self.rotations, self.pattern, self.ref)
        z, energy = self.kernel.correlate(self.tau_obs + rel, self.xt, self.samples, coherent=self.coherent)
        den = np.sum(c**2 * energy, axis=-1)
        num = np.abs(np.sum(c * z, axis=-1)) ** 2 if self.coherent else np.sum(c * np.abs(z), axis=-1) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


@dataclass
class SearchResult:
    azimuth: float
    elevation: float
    distance: float
    value: float
    coarse: tuple
    warnings: list


class SideSearch:
    """Coarse lattice scan followed by the fine compass walk."""

    def __init__(self, objective: SideObjective, region: Region, ecfg, dist_bounds, far: bool = True):
        self.f = objective
        self.region = region
        self.ecfg = ecfg
        da, qa = ecfg.angle_coarse_step, ecfg.angle_ratio
        self.az_c = Lattice.over(region.az_anchor, da, region.az_lo, region.az_hi)
        self.el_c = Lattice.over(region.el_anchor, da, region.el_lo, region.el_hi)
        fa = ecfg.angle_fine_step
        self.az_f = Lattice.over(region.az_anchor, fa, region.az_lo, region.az_hi)
        self.el_f = Lattice.over(region.el_anchor, fa, region.el_lo, region.el_hi)
        self.qa = qa
        self.qd = ecfg.dist_ratio
        self.dist_bounds = dist_bounds
        self.far = far or dist_bounds is None
        if dist_bounds is not None:
            lo, hi = dist_bounds
            self.d_c = Lattice.over(lo, ecfg.dist_coarse_step, lo, hi)
            self.d_f = Lattice.over(lo, ecfg.dist_fine_step, lo, hi)
        else:
            self.d_c = self.d_f = None

    def coarse_candidates(self):
        ka = np.arange(self.az_c.k_min, self.az_c.k_max + 1)
        ke = np.arange(self.el_c.k_min, self.el_c.k_max + 1)
        dists = self._distances(self.d_c)
        A, E, D = np.meshgrid(self.az_c.values(ka), self.el_c.values(ke), np.asarray(dists), indexing="ij")
        KA, KE, KD = np.meshgrid(ka, ke, np.arange(len(dists)), indexing="ij")
        return (A.ravel(), E.ravel(), D.ravel()), (KA.ravel(), KE.ravel(), KD.ravel()), len(dists)

    def _distances(self, lat):
        finite = [] if lat is None else list(lat.values(np.arange(lat.k_min, lat.k_max + 1)))
        return finite + ([math.inf] if self.far else [])

    @property
    def coarse_count(self) -> int:
        return self.az_c.size * self.el_c.size * len(self._distances(self.d_c))

    def run(self) -> SearchResult:
        warnings = ["elevation window clipped at +-90 deg"] if self.region.clipped else []
        (A, E, D), (KA, KE, KD), n_d = self.coarse_candidates()
        vals = self.f(A, E, D)
        b = int(np.argmax(vals))
        coarse = (float(A[b]), float(E[b]), float(D[b]))
        start = (int(KA[b]) * self.qa, int(KE[b]) * self.qa)
        bounds = [(self.az_f.k_min, self.az_f.k_max), (self.el_f.k_min, self.el_f.k_max)]
        (ka, ke), (val, kd) = self._walk(start, bounds, max(1, self.qa // 2))
        az = float(self.az_f.values(ka))
        el = float(self.el_f.values(ke))
        d = math.inf if kd is None else float(self.d_f.values(kd))
        return SearchResult(az, el, d, val, coarse, warnings)

    def _profile(self, points):
        """Best (value, fine distance index or None for inf) at each fine angle point.

        Scans the coarse distance lattice, refines on the fine lattice
        within one coarse step of the best finite coarse distance, and
        compares with the plane-wave candidate.
        """
        P = len(points)
        ka = np.array([p[0] for p in points])
        ke = np.array([p[1] for p in points])
        az, el = self.az_f.values(ka), self.el_f.values(ke)
        out = [(-math.inf, None)] * P
        evals = 0
        if self.far:
            v = self.f(az, el, np.full(P, math.inf))
            evals += P
            out = [(float(x), None) for x in v]
        if self.d_c is not None and self.d_c.size:
            kc = np.arange(self.d_c.k_min, self.d_c.k_max + 1)
            dc = self.d_c.values(kc)
            v = self.f(np.repeat(az, len(kc)), np.repeat(el, len(kc)), np.tile(dc, P)).reshape(P, len(kc))
            evals += v.size
            best_c = kc[np.argmax(v, axis=1)] * self.qd
            lo = np.maximum(self.d_f.k_min, best_c - self.qd)
            hi = np.minimum(self.d_f.k_max, best_c + self.qd)
            kf = [np.arange(a, h + 1) for a, h in zip(lo, hi)]
            n = np.array([len(k) for k in kf])
            flat = np.concatenate(kf)
            vf = self.f(np.repeat(az, n), np.repeat(el, n), self.d_f.values(flat))
            evals += len(flat)
            pos = 0
            for j in range(P):
                seg = vf[pos : pos + n[j]]
                i = int(np.argmax(seg))
                # finite distances precede inf in index order, so they win ties
                if seg[i] >= out[j][0]:
                    out[j] = (float(seg[i]), int(kf[j][i]))
                pos += n[j]
        if self.f.counters is not None:
            self.f.counters.fine_evals += evals
        return out

    def _walk(self, start, bounds, stride):
        """Compass search over fine angle indices on the distance-profiled objective."""
        memo = dict(zip([start], self._profile([start])))
        cur = start
        offsets = [o for o in itertools.product((-1, 0, 1), repeat=2) if any(o)]
        while True:
            cands = []
            for o in offsets:
                k = (cur[0] + stride * o[0], cur[1] + stride * o[1])
                if all(lo <= ki <= hi for ki, (lo, hi) in zip(k, bounds)):
                    cands.append(k)
            new = [k for k in cands if k not in memo]
            if new:
                memo.update(zip(new, self._profile(new)))
            if cands:
                # lowest index among equal maxima
                cands.sort()
                vals = np.array([memo[k][0] for k in cands])
                j = int(np.argmax(vals))
                if vals[j] > memo[cur][0]:
                    cur = cands[j]
                    continue
            if stride == 1:
                return cur, memo[cur]
            stride = max(1, stride // 2)

    def exhaustive_fine(self):
        """Argmax over every fine lattice point of the region (test oracle)."""
        ka = np.arange(self.az_f.k_min, self.az_f.k_max + 1)
        ke = np.arange(self.el_f.k_min, self.el_f.k_max + 1)
        dists = self._distances(self.d_f)
        A, E, D = np.meshgrid(self.az_f.values(ka), self.el_f.values(ke), np.asarray(dists), indexing="ij")
        vals = self.f(A.ravel(), E.ravel(), D.ravel())
        b = int(np.argmax(vals))
        return float(A.ravel()[b]), float(E.ravel()[b]), float(D.ravel()[b]), float(vals[b])
