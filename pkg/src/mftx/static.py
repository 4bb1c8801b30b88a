"""Hitting probabilities for a static TX/RX pair with a fully-absorbing RX.

Point release, instantaneous uniform release over the TX membrane, and the
end-to-end case in which molecules leave the membrane with the fusion-release
profile. Erfc products are evaluated through ``erfcx`` so that no factor
``exp(+2 sqrt(beta k_d))`` is ever formed.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc, erfcx

from .curves import CirCurve, log_grid
from .params import ChannelParams, StaticGeometry
from .release import EigenSpectrum, series_convolution


class GeometryError(ValueError):
    pass


def _distance(geom) -> float:
    return float(geom.l if isinstance(geom, StaticGeometry) else geom)


def _check_spectrum(spectrum: EigenSpectrum, params: ChannelParams) -> None:
    if (spectrum.r_T, spectrum.D_v, spectrum.k_f) != (params.r_T, params.D_v, params.k_f):
        raise ValueError("spectrum was solved for different (r_T, D_v, k_f)")


def beta_constants(params: ChannelParams, l: float, D_sigma: float | None = None):
    """Return (beta1, beta2) for centre distance ``l`` (um^2 / (um^2/s) = s)."""
    D = params.D_sigma if D_sigma is None else D_sigma
    b1 = (l - params.r_T - params.r_R) ** 2 / (4.0 * D)
    b2 = (l + params.r_T - params.r_R) ** 2 / (4.0 * D)
    return b1, b2


def _pos_times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be >= 0")
    return t


def _apply(fn, t):
    t = _pos_times(t)
    flat = t.reshape(-1)
    out = np.array([fn(float(x)) for x in flat])
    return out.reshape(t.shape) if t.ndim else float(out[0])


def point_hitting_pdf(params: ChannelParams, l_alpha, t, D_sigma: float | None = None):
    """Hitting density at the RX for a molecule released at distance ``l_alpha`` at t=0."""
    l_alpha = np.asarray(l_alpha, dtype=float)
    if np.any(l_alpha <= params.r_R):
        raise GeometryError("source inside RX: l_alpha must exceed r_R")
    t = _pos_times(t)
    D = params.D_sigma if D_sigma is None else D_sigma
    r = params.r_R
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (r * (l_alpha - r) / (l_alpha * np.sqrt(4 * math.pi * D * t**3))
               * np.exp(-(l_alpha - r) ** 2 / (4 * D * t) - params.k_d * t))
    val = np.where(t > 0, val, 0.0)
    return float(val) if val.ndim == 0 else val


def uniform_hitting_pdf(params: ChannelParams, geom, t, D_sigma: float | None = None):
    """Hitting density when all molecules leave the TX membrane uniformly at t=0."""
    l = _distance(geom)
    t = _pos_times(t)
    D = params.D_sigma if D_sigma is None else D_sigma
    b1, b2 = beta_constants(params, l, D)
    pref = 2.0 * params.rho * params.r_T * params.r_R / l
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (pref * np.sqrt(math.pi * D / t) * np.exp(-params.k_d * t)
               * (np.exp(-b1 / t) - np.exp(-b2 / t)))
    val = np.where(t > 0, val, 0.0)
    return float(val) if val.ndim == 0 else val


def _erfc_pair(beta, k: float, t):
    """exp(-2 sqrt(beta k)) erfc(x - y) - exp(2 sqrt(beta k)) erfc(x + y),
    x = sqrt(beta/t), y = sqrt(k t)."""
    x = np.sqrt(beta / t)
    y = np.sqrt(k * t)
    damp = np.exp(-beta / t - k * t)
    plus = erfcx(x + y) * damp
    d = x - y
    minus = np.where(d >= 0, erfcx(np.abs(d)) * damp,
                     np.exp(-2.0 * np.sqrt(beta * k)) * erfc(np.minimum(d, 0.0)))
    return minus - plus


def _arrival_integral(beta, t):
    """int_0^t s^{-1/2} exp(-beta/s) ds, the k_d = 0 building block."""
    return 2.0 * np.sqrt(t) * np.exp(-beta / t) - 2.0 * np.sqrt(np.pi * beta) * erfc(
        np.sqrt(beta / t))


def uniform_cdf_values(params: ChannelParams, l, t, D: float):
    """Vectorised uniform-release absorbed fraction over arrays of distance and time.

    Entries with t <= 0 give 0. No overlap check is done on ``l``.
    """
    l = np.asarray(l, dtype=float)
    t = np.asarray(t, dtype=float)
    l, t = np.broadcast_arrays(l, t)
    out = np.zeros(l.shape)
    pos = t > 0
    if not np.any(pos):
        return out
    lp, tp = l[pos], t[pos]
    b1, b2 = beta_constants(params, lp, D)
    k = params.k_d
    if k == 0:
        pref = 2.0 * params.rho * params.r_T * params.r_R * np.sqrt(np.pi * D) / lp
        val = pref * (_arrival_integral(b1, tp) - _arrival_integral(b2, tp))
    else:
        pref = params.rho * params.r_T * params.r_R * np.pi / lp * np.sqrt(D / k)
        val = pref * (_erfc_pair(b1, k, tp) - _erfc_pair(b2, k, tp))
    out[pos] = np.clip(val, 0.0, 1.0)
    return out


def _uniform_cdf_scalar(params: ChannelParams, l: float, t: float, D: float) -> float:
    return float(uniform_cdf_values(params, l, t, D))


def uniform_hitting_cdf(params: ChannelParams, geom, t, D_sigma: float | None = None):
    """Fraction absorbed by time t after instantaneous uniform release at t=0."""
    l = _distance(geom)
    D = params.D_sigma if D_sigma is None else D_sigma
    t = _pos_times(t)
    out = uniform_cdf_values(params, l, t, D)
    return float(out) if t.ndim == 0 else out


def uniform_asymptotic_fraction(params: ChannelParams, geom, D_sigma: float | None = None) -> float:
    """Limit of :func:`uniform_hitting_cdf` as t -> infinity."""
    l = _distance(geom)
    D = params.D_sigma if D_sigma is None else D_sigma
    if params.k_d == 0:
        return params.r_R / l
    b1, b2 = beta_constants(params, l, D)
    k = params.k_d
    pref = 2.0 * params.r_T * params.r_R * params.rho * math.pi / l * math.sqrt(D / k)
    return pref * (math.exp(-2.0 * math.sqrt(b1 * k)) - math.exp(-2.0 * math.sqrt(b2 * k)))


def e2e_asymptotic_fraction(params: ChannelParams, geom) -> float:
    """Fraction of all vesicle-borne molecules eventually absorbed.

    Every molecule is released eventually, so this depends only on the
    geometry, D_sigma and k_d, never on k_f or D_v.
    """
    return uniform_asymptotic_fraction(params, geom)


def e2e_hitting_pdf(spectrum: EigenSpectrum, params: ChannelParams, geom, t,
                    n_quad: int = 400):
    """End-to-end hitting density for an impulse of vesicles at the TX centre at t=0."""
    _check_spectrum(spectrum, params)
    l = _distance(geom)
    scale = 4.0 * params.r_T**2 * params.k_f

    def one(x):
        if x <= 0:
            return 0.0
        kernel = lambda s: uniform_hitting_pdf(params, l, s)
        return max(scale * series_convolution(spectrum, kernel, x, n_quad=n_quad), 0.0)

    return _apply(one, t)


def e2e_hitting_cdf(spectrum: EigenSpectrum, params: ChannelParams, geom, t,
                    n_quad: int = 400):
    """End-to-end fraction absorbed by time t for an impulse of vesicles at t=0."""
    _check_spectrum(spectrum, params)
    l = _distance(geom)
    scale = 4.0 * params.r_T**2 * params.k_f

    def one(x):
        if x <= 0:
            return 0.0
        kernel = lambda s: _uniform_cdf_scalar(params, l, s, params.D_sigma)
        return min(max(scale * series_convolution(spectrum, kernel, x, n_quad=n_quad), 0.0), 1.0)

    return _apply(one, t)


def gradual_point_hitting_pdf(spectrum: EigenSpectrum | None, params: ChannelParams, geom, t,
                              n_quad: int = 400):
    """Hitting density for a point source at distance l emitting with the fusion-release profile.

    ``spectrum=None`` stands for instantaneous release, which reduces to
    :func:`point_hitting_pdf`.
    """
    l = _distance(geom)
    if spectrum is None:
        return point_hitting_pdf(params, l, t)
    _check_spectrum(spectrum, params)
    scale = 4.0 * params.r_T**2 * params.k_f

    def one(x):
        if x <= 0:
            return 0.0
        kernel = lambda s: point_hitting_pdf(params, l, s)
        return max(scale * series_convolution(spectrum, kernel, x, n_quad=n_quad), 0.0)

    return _apply(one, t)


def _meta(params, l, **extra):
    meta = {"r_T": params.r_T, "r_R": params.r_R, "D_v": params.D_v, "D_sigma": params.D_sigma,
            "k_f": params.k_f, "k_d": params.k_d, "l": l}
    meta.update(extra)
    return meta


def static_curve(quantity: str, params: ChannelParams, geom, times=None, horizon: float = 20.0,
                 spectrum: EigenSpectrum | None = None) -> CirCurve:
    """Sample one of the static quantities on a grid (default 500 log-spaced points).

    quantity: 'uniform_pdf', 'uniform_cdf', 'e2e_pdf', 'e2e_cdf' or 'gradual_pdf'.
    """
    times = log_grid(horizon) if times is None else np.asarray(times, dtype=float)
    l = _distance(geom)
    if quantity == "uniform_pdf":
        vals, kind = uniform_hitting_pdf(params, l, times), "pdf"
    elif quantity == "uniform_cdf":
        vals, kind = uniform_hitting_cdf(params, l, times), "cdf"
    elif quantity == "e2e_pdf":
        vals, kind = e2e_hitting_pdf(spectrum, params, l, times), "pdf"
    elif quantity == "e2e_cdf":
        vals, kind = e2e_hitting_cdf(spectrum, params, l, times), "cdf"
    elif quantity == "gradual_pdf":
        vals, kind = gradual_point_hitting_pdf(spectrum, params, l, times), "pdf"
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    return CirCurve(times, np.asarray(vals), kind, "analytic", _meta(params, l, quantity=quantity))
