"""Expected channel response when the TX and RX both diffuse.

The TX-RX centre distance after time t is noncentral-chi distributed with
per-axis variance 2 D1 t. Molecules move relative to the RX with D2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.special import erfc, erfcx

from .curves import CirCurve, log_grid
from .params import ChannelParams, MobileParams
from .release import EigenSpectrum, series_convolution
from .static import _check_spectrum

KAPPA_VARIANTS = ("symmetric", "mixed")


class OverlapWarning(UserWarning):
    """The TX and RX overlap with non-negligible probability under the distance law."""


@dataclass(frozen=True)
class MobileProbe:
    """Observation at ``t_prime + tau`` for molecules released at ``t_prime``."""

    tau: float
    t_prime: float
    D1: float
    D2: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.t_prime <= 0:
            raise ValueError("t_prime must be > 0")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")

    @classmethod
    def of(cls, mobile: MobileParams, tau: float, t_prime: float | None = None) -> "MobileProbe":
        t_prime = mobile.t_prime if t_prime is None else t_prime
        return cls(float(tau), float(t_prime), mobile.D1, mobile.D2)

    @property
    def mu(self) -> float:
        return self.D1 * self.t_prime + self.D2 * self.tau

    @property
    def nu(self) -> float:
        return self.D1 - self.D2


def distance_pdf(mobile: MobileParams, l_t, t: float):
    """Density (1/um) of the TX-RX centre distance at time t given l0 at time 0."""
    if t <= 0:
        raise ValueError("degenerate distribution at t = 0: the distance equals l0")
    l = np.asarray(l_t, dtype=float)
    if np.any(l < 0):
        raise ValueError("distance must be >= 0")
    var = mobile.D1 * t
    if var == 0:
        raise ValueError("degenerate distribution: D1 * t = 0")
    l0 = mobile.l0
    # I_{1/2}(z) = sqrt(2/(pi z)) sinh z, folded with the Gaussian factor
    val = (l / (2.0 * l0 * math.sqrt(math.pi * var)) * np.exp(-(l - l0) ** 2 / (4.0 * var))
           * -np.expm1(-l * l0 / var))
    return float(val) if val.ndim == 0 else val


def overlap_probability(params: ChannelParams, mobile: MobileParams, t: float) -> float:
    """Probability that the centre distance at time t is below r_T + r_R."""
    return _overlap_mass(params.r_T + params.r_R, mobile.l0, mobile.D1, float(t))


@lru_cache(maxsize=256)
def _overlap_mass(a, l0, D1, t):
    probe = MobileParams(l0=l0, D_T=D1, D_R=0.0)
    return quad(lambda x: distance_pdf(probe, x, t), 0.0, a, epsabs=1e-13)[0]


def sample_distance(mobile: MobileParams, t: float, size, rng: np.random.Generator,
                    start=None) -> np.ndarray:
    """Draw distances after time t as the norm of a 3-D Gaussian step from ``start``.

    ``start`` defaults to l0 along the x axis; pass an (..., 3) array of
    separation vectors to continue a chain.
    """
    size = (size,) if np.isscalar(size) else tuple(size)
    if start is None:
        start = np.zeros(size + (3,))
        start[..., 0] = mobile.l0
    step = rng.normal(0.0, math.sqrt(2.0 * mobile.D1 * t), size + (3,))
    return np.linalg.norm(start + step, axis=-1)


def _exp_erfc(E: float, x: float) -> float:
    """exp(-E) * erfc(x) without overflow or spurious underflow."""
    if x > 0:
        return erfcx(x) * math.exp(-E - x * x)
    return math.exp(-E) * erfc(x)


def _overlap_check(params, mobile, t_prime):
    if mobile.D1 > 0 and t_prime > 0:
        p = overlap_probability(params, mobile, t_prime)
        if p > 0.01:
            warnings.warn("TX/RX overlap probability under the distance law exceeds 1%; "
                          "the analytic expectation ignores overlap", OverlapWarning,
                          stacklevel=3)


def _uniform_mixture_closed(params: ChannelParams, mobile: MobileParams, tau: float,
                            t_prime: float) -> float:
    if tau <= 0:
        return 0.0
    D1, D2, l0 = mobile.D1, mobile.D2, mobile.l0
    rT, rR = params.r_T, params.r_R
    mu = D1 * t_prime + D2 * tau
    a = D1 * t_prime
    b = D2 * tau
    if a == 0:
        # static limit: the distance is l0 with certainty
        from .static import uniform_hitting_pdf
        return uniform_hitting_pdf(params, l0, tau, D_sigma=D2)
    th_T = 0.5 * rT * math.sqrt(a / (b * mu))
    th_R = 0.5 * rR * math.sqrt(a / (b * mu))
    vt = 0.5 * l0 * math.sqrt(b / (a * mu))
    q = 4.0 * mu
    # theta products folded into the Gaussian exponents
    t1 = _exp_erfc((l0 - rT - rR) ** 2 / q, -th_T - th_R - vt)
    t2 = _exp_erfc((l0 + rT + rR) ** 2 / q, vt - th_T - th_R)
    t3 = _exp_erfc((l0 + rT - rR) ** 2 / q, -th_R + th_T - vt)
    t4 = _exp_erfc((l0 - rT + rR) ** 2 / q, vt - th_R + th_T)
    pref = params.rho * rT * rR * D2 / l0 * math.sqrt(math.pi / mu) * math.exp(-params.k_d * tau)
    return pref * ((t1 - t2) - (t3 - t4))


def expected_uniform_hitting_pdf(params: ChannelParams, mobile: MobileParams,
                                 probe: MobileProbe | float, t_prime: float | None = None):
    """Expected hitting density at the mobile RX for uniform membrane release at t'.

    ``probe`` may be a :class:`MobileProbe` or an array of tau values (with
    ``t_prime`` defaulting to ``mobile.t_prime``).
    """
    if isinstance(probe, MobileProbe):
        _overlap_check(params, mobile, probe.t_prime)
        return max(_uniform_mixture_closed(params, mobile, probe.tau, probe.t_prime), 0.0)
    tp = mobile.t_prime if t_prime is None else t_prime
    _overlap_check(params, mobile, tp)
    tau = np.asarray(probe, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    out = np.array([max(_uniform_mixture_closed(params, mobile, float(x), tp), 0.0)
                    for x in tau.reshape(-1)])
    return out.reshape(tau.shape) if tau.ndim else float(out[0])


def _kappa_integrand(zeta1, zeta2, zeta3, u, tau, t_prime, D1, D2, l0, k_d, variant):
    mu = D1 * t_prime + D2 * tau
    nu = D1 - D2
    m_plus = mu + nu * u
    m_second = m_plus if variant == "symmetric" else mu - nu * u
    rest = tau - u
    if rest <= 0:
        # erfc argument tends to -inf * zeta2 (or 0 when zeta2 = 0)
        x = -math.inf if zeta2 > 0 else (math.inf if zeta2 < 0 else 0.0)
        x_val = 2.0 if x == -math.inf else (0.0 if x == math.inf else 1.0)
        return math.exp(-(l0**2 + zeta1) / (4 * m_plus)) / math.sqrt(m_plus) * x_val
    x = (zeta3 * l0 / 2 * math.sqrt(D2 * rest / (D1 * (t_prime + u) * m_plus))
         - zeta2 / 2 * math.sqrt(D1 * (t_prime + u) / (D2 * rest * m_second)))
    E = (l0**2 + zeta1) / (4 * m_plus) + k_d * rest
    return _exp_erfc(E, x) / math.sqrt(m_plus)


def kappa_kernel(params: ChannelParams, mobile: MobileParams, tau: float, t_prime: float,
                 variant: str = "symmetric"):
    """Signed sum of the four kappa integrands, as a function of the age s = tau - u."""
    if variant not in KAPPA_VARIANTS:
        raise ValueError(f"variant must be one of {KAPPA_VARIANTS}")
    rT, rR, l0 = params.r_T, params.r_R, mobile.l0
    D1, D2, k_d = mobile.D1, mobile.D2, params.k_d
    terms = (
        (+1.0, (rT + rR) ** 2 - 2 * l0 * rT - 2 * l0 * rR, rT + rR, -1),
        (-1.0, (rT + rR) ** 2 + 2 * l0 * rT + 2 * l0 * rR, rT + rR, 1),
        (-1.0, (rT - rR) ** 2 - 2 * l0 * rR + 2 * l0 * rT, rR - rT, -1),
        (+1.0, (rT - rR) ** 2 + 2 * l0 * rR - 2 * l0 * rT, rR - rT, 1),
    )

    def kernel(s):
        u = tau - s
        return sum(sign * _kappa_integrand(z1, z2, z3, u, tau, t_prime, D1, D2, l0, k_d, variant)
                   for sign, z1, z2, z3 in terms)

    return kernel


def expected_e2e_hitting_pdf(spectrum: EigenSpectrum, params: ChannelParams, mobile: MobileParams,
                             probe: MobileProbe | float, t_prime: float | None = None,
                             variant: str = "symmetric", n_quad: int = 400):
    """Expected end-to-end hitting density at t' + tau for vesicles released at t'.

    ``variant='mixed'`` evaluates the kappa integrand with ``mu - nu u`` in
    its second square root; ``'symmetric'`` uses ``mu + nu u`` in both, which
    is what the convolution of the release profile with the uniform-release
    expectation yields.
    """
    _check_spectrum(spectrum, params)
    if isinstance(probe, MobileProbe):
        taus, tp, scalar = np.array([probe.tau]), probe.t_prime, True
    else:
        tp = mobile.t_prime if t_prime is None else t_prime
        taus = np.asarray(probe, dtype=float)
        scalar = taus.ndim == 0
    if np.any(taus < 0):
        raise ValueError("tau must be >= 0")
    _overlap_check(params, mobile, tp)
    scale = (4.0 * params.r_T**3 * params.r_R * params.rho * mobile.D2 * params.k_f
             * math.sqrt(math.pi) / mobile.l0)
    out = []
    for tau in taus.reshape(-1):
        tau = float(tau)
        if tau <= 0:
            out.append(0.0)
            continue
        kern = kappa_kernel(params, mobile, tau, tp, variant)
        out.append(max(scale * series_convolution(spectrum, kern, tau, n_quad=n_quad), 0.0))
    out = np.array(out)
    return float(out[0]) if scalar else out.reshape(taus.shape)


def expected_e2e_fraction(spectrum: EigenSpectrum, params: ChannelParams, mobile: MobileParams,
                          tau: float, t_prime: float | None = None, variant: str = "symmetric",
                          epsrel: float = 1e-8) -> float:
    """Expected fraction absorbed between t' and t' + tau."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if tau == 0:
        return 0.0
    f = lambda x: expected_e2e_hitting_pdf(spectrum, params, mobile, x, t_prime, variant)
    val, err = quad(f, 0.0, tau, epsabs=1e-12, epsrel=epsrel, limit=200)
    return min(max(val, 0.0), 1.0)


def expected_e2e_fraction_curve(spectrum: EigenSpectrum, params: ChannelParams,
                                mobile: MobileParams, horizon: float, n: int = 401,
                                t_prime: float | None = None,
                                variant: str = "symmetric") -> CirCurve:
    """Cumulative expected fraction on a uniform grid over (0, horizon].

    The density is sampled on the grid and integrated with a cumulative
    Simpson rule, which is far cheaper than one quadrature per point.
    """
    grid = np.linspace(0.0, horizon, n)
    dens = expected_e2e_hitting_pdf(spectrum, params, mobile, grid, t_prime, variant)
    cum = np.clip(cumulative_simpson(dens, x=grid, initial=0.0), 0.0, 1.0)
    cum = np.maximum.accumulate(cum)
    return CirCurve(grid[1:], cum[1:], "cdf", "analytic", _meta(params, mobile, t_prime))


def _meta(params, mobile, t_prime):
    return {"t_prime": mobile.t_prime if t_prime is None else t_prime, "D_T": mobile.D_T,
            "D_R": mobile.D_R, "l0": mobile.l0, "D_v": params.D_v, "k_f": params.k_f,
            "k_d": params.k_d}


def mobile_curve(quantity: str, params: ChannelParams, mobile: MobileParams, times=None,
                 horizon: float = 10.0, spectrum: EigenSpectrum | None = None,
                 t_prime: float | None = None) -> CirCurve:
    """Sample 'uniform_pdf', 'e2e_pdf' or 'e2e_cdf' on a grid over tau."""
    if quantity == "e2e_cdf":
        return expected_e2e_fraction_curve(spectrum, params, mobile, horizon, t_prime=t_prime)
    times = log_grid(horizon) if times is None else np.asarray(times, dtype=float)
    if quantity == "uniform_pdf":
        vals = expected_uniform_hitting_pdf(params, mobile, times, t_prime)
    elif quantity == "e2e_pdf":
        vals = expected_e2e_hitting_pdf(spectrum, params, mobile, times, t_prime)
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    meta = _meta(params, mobile, t_prime)
    meta["quantity"] = quantity
    return CirCurve(times, np.asarray(vals), "pdf", "analytic", meta)
