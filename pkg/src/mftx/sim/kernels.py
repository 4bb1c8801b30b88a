"""Compiled per-realization kernels.

Every kernel draws from the ``numpy.random.Generator`` it is handed, so a
realization depends only on that generator's seed and the configuration, not
on which worker runs it. Particles are advanced one at a time; with no particle-particle
interaction this is equivalent to lockstep updates.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .geometry import crossing_fraction, crossing_point

ABSORBED = 0
DEGRADED = 1
ALIVE = 2


@njit(cache=True)
def vesicle_fusion(rng, t0, t_end, r_T, sigma, p_mf, dt):
    """Walk one vesicle from the TX centre until it fuses or ``t_end`` passes.

    Returns (fused, fusion time, fusion point x, y, z).
    """
    x = 0.0
    y = 0.0
    z = 0.0
    r2 = r_T * r_T
    k = 0
    while True:
        t = t0 + k * dt
        if t >= t_end:
            return False, t_end, np.nan, np.nan, np.nan
        nx = x + sigma * rng.standard_normal()
        ny = y + sigma * rng.standard_normal()
        nz = z + sigma * rng.standard_normal()
        if nx * nx + ny * ny + nz * nz > r2:
            if rng.random() < p_mf:
                xf, yf, zf = crossing_point(x, y, z, nx, ny, nz, r_T)
                f = crossing_fraction(x, y, z, xf, yf, zf, nx, ny, nz)
                return True, t + f * dt, xf, yf, zf
            # reflected: back to the start of the step
        else:
            x = nx
            y = ny
            z = nz
        k += 1


@njit(cache=True)
def molecule_walk(rng, t0, t_end, x, y, z, r_R, sigma, survive, dt, reflect, cx, cy, cz, r_T,
                  bridge, D):
    """Walk one molecule in the RX frame (RX centre at the origin).

    ``survive`` is the per-step survival probability. With ``reflect`` set,
    steps ending inside the TX sphere (centre cx, cy, cz) are undone. With
    ``bridge`` set, steps that start and end outside the RX are also counted as
    absorbed with the Brownian-bridge crossing probability of the tangent
    plane, exp(-(d0 - r_R)(d1 - r_R) / (D dt)).

    Returns (status, time).
    """
    rr = r_R * r_R
    rt2 = r_T * r_T
    if x * x + y * y + z * z <= rr:
        return ABSORBED, t0
    k = 0
    while True:
        t = t0 + k * dt
        if t >= t_end:
            return ALIVE, t_end
        if survive < 1.0 and rng.random() >= survive:
            return DEGRADED, t
        nx = x + sigma * rng.standard_normal()
        ny = y + sigma * rng.standard_normal()
        nz = z + sigma * rng.standard_normal()
        if reflect:
            ex = nx - cx
            ey = ny - cy
            ez = nz - cz
            if ex * ex + ey * ey + ez * ez < rt2:
                k += 1
                continue
        d2 = nx * nx + ny * ny + nz * nz
        if d2 <= rr:
            xf, yf, zf = crossing_point(nx, ny, nz, x, y, z, r_R)
            f = crossing_fraction(x, y, z, xf, yf, zf, nx, ny, nz)
            return ABSORBED, t + f * dt
        if bridge:
            e = ((math.sqrt(x * x + y * y + z * z) - r_R) * (math.sqrt(d2) - r_R)
                 / (D * dt))
            # beyond e = 40 the crossing probability is below 1e-17
            if e < 40.0 and rng.random() < math.exp(-e):
                return ABSORBED, t + 0.5 * dt
        x = nx
        y = ny
        z = nz
        k += 1


@njit(cache=True)
def _separation_path(rng, n, dt, D1, l0):
    q = np.empty((n, 3))
    q[0, 0] = l0
    q[0, 1] = 0.0
    q[0, 2] = 0.0
    s = math.sqrt(2.0 * D1 * dt)
    for i in range(1, n):
        for a in range(3):
            q[i, a] = q[i - 1, a] + s * rng.standard_normal()
    return q


@njit(cache=True)
def run_realization(rng, release_times, N_v, eta, r_T, r_R, D_v, k_f, D_mol, k_d, dt, t_end,
                    reflect, mobile, D1, l0, bridge):
    """One full realization.

    Vesicles leave the TX centre at every entry of ``release_times`` (N_v each).
    ``l0`` is the fixed (static) or initial (mobile) centre distance; for
    the mobile case the TX-RX separation performs a Gaussian walk with D1.
    Returns fusion times, fusion points (TX frame), absorption times and the
    number of degraded and still-diffusing molecules.
    """
    sigma_v = math.sqrt(2.0 * D_v * dt)
    sigma_m = math.sqrt(2.0 * D_mol * dt)
    p_mf = k_f * math.sqrt(math.pi * dt / D_v)
    survive = math.exp(-k_d * dt)
    if mobile:
        n_grid = int(math.ceil(t_end / dt)) + 2
        q = _separation_path(rng, n_grid, dt, D1, l0)
    else:
        q = np.zeros((1, 3))
        q[0, 0] = l0
    n_ves = release_times.shape[0] * N_v
    fus_t = np.full(n_ves, np.nan)
    fus_p = np.full((n_ves, 3), np.nan)
    abs_t = np.empty(n_ves * eta)
    n_abs = 0
    n_deg = 0
    n_alive = 0
    v = 0
    for j in range(release_times.shape[0]):
        for _ in range(N_v):
            fused, tf, xf, yf, zf = vesicle_fusion(rng, release_times[j], t_end, r_T, sigma_v, p_mf, dt)
            if fused:
                fus_t[v] = tf
                fus_p[v, 0] = xf
                fus_p[v, 1] = yf
                fus_p[v, 2] = zf
                if mobile:
                    g = tf / dt
                    i0 = int(g)
                    w = g - i0
                    cx = (1 - w) * q[i0, 0] + w * q[i0 + 1, 0]
                    cy = (1 - w) * q[i0, 1] + w * q[i0 + 1, 1]
                    cz = (1 - w) * q[i0, 2] + w * q[i0 + 1, 2]
                else:
                    cx = q[0, 0]
                    cy = q[0, 1]
                    cz = q[0, 2]
                for _m in range(eta):
                    status, tm = molecule_walk(rng, tf, t_end, cx + xf, cy + yf, cz + zf, r_R, sigma_m,
                                               survive, dt, reflect, cx, cy, cz, r_T, bridge, D_mol)
                    if status == ABSORBED:
                        abs_t[n_abs] = tm
                        n_abs += 1
                    elif status == DEGRADED:
                        n_deg += 1
                    else:
                        n_alive += 1
            v += 1
    return fus_t, fus_p, abs_t[:n_abs], n_deg, n_alive


@njit(cache=True)
def run_fusion_times(rng, n, r_T, D_v, k_f, dt, t_end):
    """Fusion times of ``n`` independent vesicles (NaN if not fused by t_end)."""
    sigma_v = math.sqrt(2.0 * D_v * dt)
    p_mf = k_f * math.sqrt(math.pi * dt / D_v)
    out = np.full(n, np.nan)
    for i in range(n):
        fused, tf, _x, _y, _z = vesicle_fusion(rng, 0.0, t_end, r_T, sigma_v, p_mf, dt)
        if fused:
            out[i] = tf
    return out


@njit(cache=True)
def run_uniform_release(rng, n, r_T, r_R, l, D_mol, k_d, dt, t_end, reflect, bridge):
    """Absorption times of ``n`` molecules released uniformly on the TX membrane at t=0.

    Returns the absorption times and per-molecule status codes.
    """
    sigma_m = math.sqrt(2.0 * D_mol * dt)
    survive = math.exp(-k_d * dt)
    times = np.full(n, np.nan)
    status = np.empty(n, dtype=np.int64)
    for i in range(n):
        gx = rng.standard_normal()
        gy = rng.standard_normal()
        gz = rng.standard_normal()
        nrm = math.sqrt(gx * gx + gy * gy + gz * gz)
        x = l + r_T * gx / nrm
        y = r_T * gy / nrm
        z = r_T * gz / nrm
        st, tm = molecule_walk(rng, 0.0, t_end, x, y, z, r_R, sigma_m, survive, dt, reflect,
                               l, 0.0, 0.0, r_T, bridge, D_mol)
        status[i] = st
        if st == ABSORBED:
            times[i] = tm
    return times, status
