"""Where and when a straight step crosses a sphere.

The crossing abscissa solves ``L1 x^2 + L2 x + L3 = 0`` obtained by putting
the line through the two step end points into the sphere equation; the other
coordinates follow from the line. The axis with the largest displacement
plays the role of x so the division by the x-displacement is well
conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


@njit(cache=True)
def line_sphere_coefficients(x0, y0, z0, x1, y1, z1, r):
    dx = x1 - x0
    dy = y1 - y0
    dz = z1 - z0
    L1 = dx * dx + dy * dy + dz * dz
    L2 = 2.0 * dy * (x1 * y0 - x0 * y1) + 2.0 * dz * (x1 * z0 - x0 * z1)
    L3 = (x0 * dy * (x0 * y1 - 2.0 * y0 * x1 + y0 * x0)
          + x0 * dz * (x0 * z1 - 2.0 * x1 * z0 + x0 * z0)
          + dx * dx * (y0 * y0 + z0 * z0 - r * r))
    return L1, L2, L3


@njit(cache=True)
def _crossing_x(x0, y0, z0, x1, y1, z1, r):
    L1, L2, L3 = line_sphere_coefficients(x0, y0, z0, x1, y1, z1, r)
    disc = L2 * L2 - 4.0 * L1 * L3
    if disc < 0.0:
        disc = 0.0
    sq = math.sqrt(disc)
    # numerically stable pair of roots
    q = -0.5 * (L2 + sq) if L2 >= 0.0 else -0.5 * (L2 - sq)
    ra = q / L1
    rb = L3 / q if q != 0.0 else ra
    ga = (ra - x0) * (ra - x1)
    gb = (rb - x0) * (rb - x1)
    return ra if ga <= gb else rb


@njit(cache=True)
def crossing_point(x0, y0, z0, x1, y1, z1, r):
    """Point where the segment p0 -> p1 meets the origin-centred sphere of radius r.

    Exactly one end point must lie strictly outside and the other inside or on
    the sphere.
    """
    ax = abs(x1 - x0)
    ay = abs(y1 - y0)
    az = abs(z1 - z0)
    if ax >= ay and ax >= az:
        xf = _crossing_x(x0, y0, z0, x1, y1, z1, r)
        s = (xf - x0) / (x1 - x0)
        return xf, y0 + s * (y1 - y0), z0 + s * (z1 - z0)
    if ay >= az:
        yf = _crossing_x(y0, z0, x0, y1, z1, x1, r)
        s = (yf - y0) / (y1 - y0)
        return x0 + s * (x1 - x0), yf, z0 + s * (z1 - z0)
    zf = _crossing_x(z0, x0, y0, z1, x1, y1, r)
    s = (zf - z0) / (z1 - z0)
    return x0 + s * (x1 - x0), y0 + s * (y1 - y0), zf


@njit(cache=True)
def crossing_fraction(x0, y0, z0, xf, yf, zf, x1, y1, z1):
    """Squared-displacement fraction of the step spent before the crossing."""
    num = (xf - x0) ** 2 + (yf - y0) ** 2 + (zf - z0) ** 2
    den = (x1 - x0) ** 2 + (y1 - y0) ** 2 + (z1 - z0) ** 2
    f = num / den
    return min(max(f, 0.0), 1.0)


@dataclass(frozen=True)
class FusionEvent:
    """Quadratic coefficients and the fusion point of a membrane-crossing step."""

    L1: float
    L2: float
    L3: float
    point: np.ndarray
    dt_f: float | None = None


def fusion_point(p_prev, p_next, r_T: float) -> FusionEvent:
    """Fusion point on the TX membrane for a step leaving the sphere."""
    p0 = np.asarray(p_prev, dtype=float)
    p1 = np.asarray(p_next, dtype=float)
    if not np.linalg.norm(p0) <= r_T + 1e-12 or not np.linalg.norm(p1) > r_T:
        raise ValueError("need |p_prev| <= r_T < |p_next|")
    L1, L2, L3 = line_sphere_coefficients(*p0, *p1, r_T)
    pt = np.array(crossing_point(*p0, *p1, r_T))
    return FusionEvent(L1, L2, L3, pt)


def fusion_time(p_prev, p_fusion, p_next, dt: float) -> float:
    """Sub-step time of the crossing, from squared displacements."""
    p0, pf, p1 = (np.asarray(p, dtype=float) for p in (p_prev, p_fusion, p_next))
    if np.all(p1 == p0):
        raise ValueError("zero-length step")
    return dt * crossing_fraction(*p0, *pf, *p1)
