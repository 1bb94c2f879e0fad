"""Fused candidate-batch objective for VNA kernels and Gaussian horns.

Evaluates, for each candidate (az, el, dist), the geometry of every window
direction, the horn amplitude gain, the windowed kernel correlation and the
phase-free or coherent objective in one pass without temporaries. The numpy
path in :mod:`dss_sage.sage.search` computes the same quantity and is used
for tabulated patterns, correlation kernels and as a cross-check in tests.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

C0 = 299_792_458.0
# below this |sin| the closed-form kernel is replaced by the direct ratio;
# above it the closed form is accurate to ~1e-12 / (K * NEAR) relative
NEAR = 1e-5


@njit(cache=True)
def _g_direct(x, K):
    s = math.sin(x)
    if abs(s) < 1e-12:
        m = round(x / math.pi)
        return 1.0 if (m * (K - 1)) % 2 == 0 else -1.0
    return math.sin(K * x) / (K * s)


_FM = {"contract", "reassoc", "nsz", "arcp"}


@njit(cache=True, fastmath=_FM, inline="always")
def _window_sums(su, cu, sk, cv, sv, sg, xr, xi, tol):
    zr = 0.0
    zi = 0.0
    e = 0.0
    for w in range(cv.shape[0]):
        dw = su * cv[w] - cu * sv[w]
        dws = dw if abs(dw) >= tol else 1.0
        g = sg[w] * sk / dws
        zr += g * xr[w]
        zi += g * xi[w]
        e += g * g
    return zr, zi, e


@njit(cache=True, fastmath=_FM)
def batch_objective(
    az, el, dist, pos, ref, rot, a_az, a_el, amp0,
    tau_obs, xr, xi, i0, pidf, K, two_pi_fc, coherent, out,
):
    """Objective for each candidate; samples are the contiguous run from ``i0``.

    The kernel sum uses the closed form with its denominator guarded, so the
    sample loop has no branches; the at most four samples near a kernel peak
    (where the closed form loses precision) are then replaced by the direct
    evaluation.
    """
    B = az.shape[0]
    N = pos.shape[0]
    W = xr.shape[1]
    cv = np.empty(W)
    sv = np.empty(W)
    sg = np.empty(W)
    for w in range(W):
        v = math.pi * (i0 + w) / float(K)
        cv[w] = math.cos(v)
        sv[w] = math.sin(v)
        sg[w] = 1.0 if (i0 + w) % 2 == 0 else -1.0
    Kf = float(K)
    near_tol = NEAR
    for b in range(B):
        ce = math.cos(el[b])
        ox = math.cos(az[b]) * ce
        oy = math.sin(az[b]) * ce
        oz = math.sin(el[b])
        d = dist[b]
        finite = d < np.inf
        if finite:
            vx = d * ox - ref[0]
            vy = d * oy - ref[1]
            vz = d * oz - ref[2]
            pp = ref[0] * ref[0] + ref[1] * ref[1] + ref[2] * ref[2]
            wp = ox * ref[0] + oy * ref[1] + oz * ref[2]
            off_ref = (pp - 2.0 * d * wp) / (math.sqrt(vx * vx + vy * vy + vz * vz) + d) / C0
        else:
            off_ref = -(ox * ref[0] + oy * ref[1] + oz * ref[2]) / C0
        acc = 0.0
        num_r = 0.0
        num_i = 0.0
        den = 0.0
        for n in range(N):
            if finite:
                vx = d * ox - pos[n, 0]
                vy = d * oy - pos[n, 1]
                vz = d * oz - pos[n, 2]
                nv = math.sqrt(vx * vx + vy * vy + vz * vz)
                pp = pos[n, 0] * pos[n, 0] + pos[n, 1] * pos[n, 1] + pos[n, 2] * pos[n, 2]
                wp = ox * pos[n, 0] + oy * pos[n, 1] + oz * pos[n, 2]
                off = (pp - 2.0 * d * wp) / (nv + d) / C0
                ux = vx / nv
                uy = vy / nv
                uz = vz / nv
            else:
                off = -(ox * pos[n, 0] + oy * pos[n, 1] + oz * pos[n, 2]) / C0
                ux = ox
                uy = oy
                uz = oz
            lx = rot[n, 0, 0] * ux + rot[n, 0, 1] * uy + rot[n, 0, 2] * uz
            ly = rot[n, 1, 0] * ux + rot[n, 1, 1] * uy + rot[n, 1, 2] * uz
            lz = rot[n, 2, 0] * ux + rot[n, 2, 1] * uy + rot[n, 2, 2] * uz
            if lz > 1.0:
                lz = 1.0
            elif lz < -1.0:
                lz = -1.0
            daz = math.atan2(ly, lx)
            dl = math.asin(lz)
            cn = amp0 * math.exp(-0.5 * (a_az * daz * daz + a_el * dl * dl))
            tau = tau_obs + off - off_ref
            u = pidf * tau
            sk = math.sin(Kf * u) / Kf
            su = math.sin(u)
            cu = math.cos(u)
            zr, zi, e = _window_sums(su, cu, sk, cv, sv, sg, xr[n], xi[n], near_tol)
            j = int(math.floor(Kf * u / math.pi))
            for t in range(-1, 3):
                w = (j + t) % K - i0
                if w < 0 or w >= W:
                    continue
                dw = su * cv[w] - cu * sv[w]
                if abs(dw) >= near_tol:
                    continue
                gf = sg[w] * sk
                gd = _g_direct(u - math.pi * (i0 + w) / Kf, K)
                zr += (gd - gf) * xr[n, w]
                zi += (gd - gf) * xi[n, w]
                e += gd * gd - gf * gf
            if coherent:
                ph = two_pi_fc * tau
                c = math.cos(ph)
                s = math.sin(ph)
                num_r += cn * (zr * c - zi * s)
                num_i += cn * (zr * s + zi * c)
            else:
                acc += cn * math.sqrt(zr * zr + zi * zi)
            den += cn * cn * e
        if den > 0.0:
            if coherent:
                out[b] = (num_r * num_r + num_i * num_i) / den
            else:
                out[b] = acc * acc / den
        else:
            out[b] = 0.0


def supported(kernel, pattern, samples) -> bool:
    """The fused route needs a VNA kernel, a Gaussian horn and contiguous samples."""
    from ..waveform import VnaKernel

    samples = np.asarray(samples)
    contiguous = samples.size > 0 and bool(np.all(np.diff(samples) == 1))
    return isinstance(kernel, VnaKernel) and pattern.kind == "gaussian" and contiguous


def gaussian_coefficients(pattern):
    """(a_az, a_el, amp0) with power = amp0^2 exp(-(a_az daz^2 + a_el del^2))."""
    ln = 4.0 * math.log(2.0)
    a_az = ln / pattern.hpbw_az**2 if math.isfinite(pattern.hpbw_az) else 0.0
    a_el = ln / pattern.hpbw_el**2 if math.isfinite(pattern.hpbw_el) else 0.0
    return a_az, a_el, math.sqrt(pattern.boresight_gain)
