"""Vesicle-release kinetics of the membrane-fusion transmitter.

Vesicles start at the TX centre and fuse with the membrane through a
radiation boundary with rate ``k_f``. The release density is an eigen-series
over the roots of ``-D_v lam j0'(lam r_T) = k_f j0(lam r_T)``.

Roots are stored as ``a_n = lam_n r_T = (n - 1/2) pi + delta_n`` with the
small offset ``delta_n`` kept separately; sin/cos of ``a_n`` are then exact to
working precision even for n ~ 1e4, where ``a_n`` itself carries an absolute
rounding of ~1e-12.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad_vec

from .params import ChannelParams


class EigenSolveError(RuntimeError):
    pass


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues of the radiation-boundary problem for one (r_T, D_v, k_f)."""

    lambdas: np.ndarray
    offsets: np.ndarray
    r_T: float
    D_v: float
    k_f: float
    n_star: int | None = None
    # derived, see __post_init__
    sin_a: np.ndarray = field(init=False, repr=False)
    cos_a: np.ndarray = field(init=False, repr=False)
    denom: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    rates: np.ndarray = field(init=False, repr=False)
    pdf_coef: np.ndarray = field(init=False, repr=False)
    cdf_coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = np.arange(1, len(self.lambdas) + 1)
        sign = np.where(n % 2 == 1, 1.0, -1.0)
        if self.k_f == 0:
            sign = -sign  # roots sit one interval further out, see solve_eigenvalues
        delta = np.asarray(self.offsets)
        a = np.asarray(self.lambdas) * self.r_T
        sin_a = sign * np.cos(delta)
        cos_a = -sign * np.sin(delta)
        # 2a - sin(2a) with sin(2a) = -sin(2 delta)
        denom = 2.0 * a + np.sin(2.0 * delta)
        weights = sin_a / (self.r_T * denom)  # lam j0(lam r_T) / (2 lam r_T - sin 2 lam r_T)
        lam = np.asarray(self.lambdas)
        rates = self.D_v * lam**2
        pdf_coef = 4.0 * self.r_T**2 * self.k_f * lam**2 * weights
        cdf_coef = 4.0 * self.r_T**2 * self.k_f * weights / self.D_v
        for name, value in (("lambdas", lam), ("offsets", delta), ("sin_a", sin_a),
                            ("cos_a", cos_a), ("denom", denom), ("weights", weights),
                            ("rates", rates), ("pdf_coef", pdf_coef), ("cdf_coef", cdf_coef)):
            object.__setattr__(self, name, _readonly(value))

    @property
    def n_max(self) -> int:
        return len(self.lambdas)

    @property
    def n_terms(self) -> int:
        """Number of terms used by the series evaluators."""
        return self.n_max if self.n_star is None else min(self.n_star, self.n_max)

    @property
    def identity_sum(self) -> float:
        """Exact value of sum_n lam j0 / (2 lam r_T - sin 2 lam r_T) = D_v / (4 r_T^2 k_f)."""
        if self.k_f == 0:
            return math.inf
        return self.D_v / (4.0 * self.r_T**2 * self.k_f)

    def truncated(self, n_star: int | None) -> "EigenSpectrum":
        return replace(self, n_star=n_star)

    def remainder(self, n: int) -> float:
        """identity_sum minus the first ``n`` weights (the exact series tail)."""
        if self.k_f == 0:
            return 0.0
        return self.identity_sum - float(np.sum(self.weights[:n]))


def _solve_offsets(base: np.ndarray, c: float, iters: int = 80) -> np.ndarray:
    """Solve (base + d) sin d + c cos d = 0 for d in (-pi/2, pi/2), vectorised."""

    def h(d):
        return (base + d) * np.sin(d) + c * np.cos(d)

    lo = np.full_like(base, -0.5 * np.pi)
    hi = np.full_like(base, 0.5 * np.pi)
    # h(lo) <= 0 < h(hi) holds for every interval; checked after the loop
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = h(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(hi))):
            break
    d = 0.5 * (lo + hi)
    for _ in range(3):
        dh = (1.0 - c) * np.sin(d) + (base + d) * np.cos(d)
        step = np.where(dh != 0, h(d) / np.where(dh != 0, dh, 1.0), 0.0)
        cand = d - step
        inside = (cand > lo - 1e-15) & (cand < hi + 1e-15)
        d = np.where(inside, cand, d)
    bad = ~((d > -0.5 * np.pi) & (d < 0.5 * np.pi))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise EigenSolveError(f"root bracketing failed for n={i + 1} in interval "
                              f"({base[i] - np.pi / 2:.6g}, {base[i] + np.pi / 2:.6g})")
    return d


def solve_eigenvalues(params: ChannelParams, n_max: int = 10000) -> EigenSpectrum:
    """Return the first ``n_max`` eigenvalues for the TX in ``params``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    r_T, D_v, k_f = float(params.r_T), float(params.D_v), float(params.k_f)
    # tan a = a / c with a = lam r_T; exactly one root per ((n-1) pi, n pi)
    c = 1.0 - k_f * r_T / D_v
    n = np.arange(1, n_max + 1, dtype=float)
    if k_f == 0:
        # Neumann limit: a = 0 is the (zero-weight) constant mode; skip it
        base = (n + 0.5) * np.pi
    else:
        base = (n - 0.5) * np.pi
    delta = _solve_offsets(base, c)
    spectrum = EigenSpectrum(lambdas=(base + delta) / r_T, offsets=delta,
                             r_T=r_T, D_v=D_v, k_f=k_f)
    res = boundary_residuals(spectrum)
    worst = int(np.argmax(res))
    if not res[worst] < 1e-10:
        raise EigenSolveError(f"eigenvalue n={worst + 1} fails the boundary equation "
                              f"(relative residual {res[worst]:.3g})")
    if np.any(np.diff(spectrum.lambdas) <= 0):
        raise EigenSolveError("eigenvalues not strictly increasing")
    return spectrum


def boundary_residuals(spectrum: EigenSpectrum) -> np.ndarray:
    """Relative residual of ``-D_v lam j0'(lam r_T) - k_f j0(lam r_T)`` per root."""
    lam = spectrum.lambdas
    a = lam * spectrum.r_T
    j0 = spectrum.sin_a / a
    dj0 = (a * spectrum.cos_a - spectrum.sin_a) / a**2
    lhs = -spectrum.D_v * lam * dj0
    rhs = spectrum.k_f * j0
    if spectrum.k_f == 0:
        return np.abs(lhs) / (spectrum.D_v * lam / a)
    return np.abs(lhs - rhs) / (np.abs(rhs) + 1e-300)


def eigen_sum(spectrum: EigenSpectrum, n: int | None = None, endpoint_average: bool = True) -> float:
    """Partial sum of ``lam j0 / (2 lam r_T - sin 2 lam r_T)`` over the first ``n`` roots.

    The terms alternate in sign and decay like 1/n, so a plain partial sum
    oscillates about the limit by half the last term. ``endpoint_average``
    returns the mean of the partial sums at n-1 and n instead.
    """
    n = spectrum.n_max if n is None else n
    partial = np.cumsum(spectrum.weights[:n])
    if endpoint_average and n >= 2:
        return float(0.5 * (partial[-1] + partial[-2]))
    return float(partial[-1])


def term_magnitudes(spectrum: EigenSpectrum, t: float) -> np.ndarray:
    """|f_{r,n}(t)| for every stored n."""
    return np.abs(spectrum.pdf_coef * np.exp(-spectrum.rates * t))


def truncation_index(spectrum: EigenSpectrum, t_hat: float = 0.01, tol: float = 1e-12) -> int:
    """Smallest n whose series term at ``t_hat`` is below ``tol`` in magnitude."""
    if t_hat <= 0:
        raise ValueError("t_hat must be > 0")
    small = term_magnitudes(spectrum, t_hat) < tol
    if not np.any(small):
        warnings.warn(f"no term below tol={tol:g} at t={t_hat:g} within n_max={spectrum.n_max}",
                      RuntimeWarning, stacklevel=2)
        return spectrum.n_max
    return int(np.argmax(small)) + 1


def _as_times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be >= 0")
    return t


def release_pdf(spectrum: EigenSpectrum, t, return_clamped: bool = False):
    """Molecule release probability density f_r(t) in 1/s.

    Negative truncation artifacts (only at very small t) are clamped to zero;
    with ``return_clamped`` the number of clamped samples is returned as well.
    """
    t = _as_times(t)
    n = spectrum.n_terms
    tt = t.reshape(-1, 1)
    vals = np.zeros(tt.shape[0])
    pos = tt[:, 0] > 0
    if np.any(pos):
        terms = spectrum.pdf_coef[:n] * np.exp(-spectrum.rates[:n] * tt[pos])
        vals[pos] = terms.sum(axis=1)
    neg = vals < 0
    vals[neg] = 0.0
    out = vals.reshape(t.shape) if t.ndim else float(vals[0])
    if return_clamped:
        return out, int(np.count_nonzero(neg))
    return out


def release_cdf(spectrum: EigenSpectrum, t, exact_tail: bool = True):
    """Fraction of molecules released by time t.

    With ``exact_tail`` the constant part of the series is summed in closed form
    (it equals one), i.e. ``F_r = 1 - sum c_n exp(-D_v lam_n^2 t)``; otherwise
    the truncated series is evaluated term by term as written.
    """
    t = _as_times(t)
    n = spectrum.n_terms
    tt = t.reshape(-1, 1)
    decay = np.exp(-spectrum.rates[:n] * tt)
    if spectrum.k_f == 0:
        vals = np.zeros(tt.shape[0])
    elif exact_tail:
        vals = 1.0 - (spectrum.cdf_coef[:n] * decay).sum(axis=1)
        vals[tt[:, 0] == 0] = 0.0
    else:
        vals = (spectrum.cdf_coef[:n] * (1.0 - decay)).sum(axis=1)
    vals = np.clip(vals, 0.0, 1.0)
    return vals.reshape(t.shape) if t.ndim else float(vals[0])


def release_window(spectrum: EigenSpectrum, threshold: float = 0.998, n_terms: int = 10000,
                   horizon: float = 1000.0, grid: float = 1e-3) -> float:
    """Smallest time tau_p with F_r(tau_p) >= threshold.

    F_r is the term-by-term series with ``n_terms`` terms. The crossing is
    located on a uniform ``grid`` and then refined by bisection inside the
    grid cell.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if spectrum.n_max < n_terms:
        raise ValueError(f"spectrum holds {spectrum.n_max} roots, {n_terms} requested")
    spec = spectrum.truncated(n_terms)

    def F(x):
        return release_cdf(spec, x, exact_tail=False)

    hi = grid
    while F(hi) < threshold:
        hi *= 2.0
        if hi > horizon:
            raise ValueError(f"threshold {threshold} not reached within horizon {horizon} s")
    lo = hi / 2.0 if hi > grid else 0.0
    # uniform grid scan inside the bracket, in chunks to bound memory
    k0 = int(math.floor(lo / grid))
    k1 = int(math.ceil(hi / grid))
    first = None
    for start in range(k0, k1 + 1, 512):
        ks = np.arange(start, min(start + 512, k1 + 1))
        hit = np.nonzero(F(ks * grid) >= threshold)[0]
        if hit.size:
            first = int(ks[hit[0]])
            break
    if first is None or first == 0:
        return first * grid if first == 0 else hi
    a, b = (first - 1) * grid, first * grid
    for _ in range(60):
        m = 0.5 * (a + b)
        if F(m) >= threshold:
            b = m
        else:
            a = m
        if b - a < 1e-12:
            break
    return b


class QuadratureError(RuntimeError):
    pass


def series_convolution(spectrum: EigenSpectrum, kernel: Callable[[float], float], t: float,
                       n_quad: int = 400, epsrel: float = 1e-10,
                       epsabs: float = 1e-14) -> float:
    """Sum over n of ``lam_n^2 w_n * int_0^t exp(-D_v lam_n^2 (t - s)) kernel(s) ds``.

    ``kernel`` is a function of the age ``s = t - u`` of the released molecule
    and ``w_n`` are the spectrum weights. The first ``n_quad`` integrals are
    computed by adaptive quadrature, vectorised over n, in the variable
    ``v = sqrt(s)``; this removes square-root behaviour at ``s = 0``. For
    n > n_quad the exponential concentrates at s = t and each integral is
    ``kernel(t) / (D_v lam_n^2)`` to leading order; the sum of the remaining
    weights is known in closed form, so the tail contributes
    ``kernel(t) * remainder / D_v``. The next order, proportional to the
    kernel's slope at s = t, is added as well.
    """
    if t <= 0 or spectrum.k_f == 0:
        return 0.0
    N = min(n_quad, spectrum.n_terms)
    coef = spectrum.lambdas[:N] ** 2 * spectrum.weights[:N]
    a = spectrum.rates[:N]
    sqrt_t = math.sqrt(t)

    def integrand(v):
        s = v * v
        k = kernel(s) if s > 0 else 0.0
        return (2.0 * v * k) * np.exp(-a * (t - s))

    # breakpoints where exp(-a u) changes scale for slow and fast modes
    pts = set()
    for scale in (a[0], a[min(N - 1, 9)], a[N - 1]):
        for m in (1.0, 10.0):
            u = m / scale
            if 0 < u < t:
                pts.add(math.sqrt(t - u))
    vals, err, info = quad_vec(integrand, 0.0, sqrt_t, epsrel=epsrel, epsabs=epsabs, norm="max",
                               points=sorted(pts) or None, limit=20000, full_output=True)
    if not info.success:
        raise QuadratureError(f"quadrature did not converge at t={t:g}: "
                              f"error estimate {err:.3g} ({info.message})")
    total = float(np.dot(coef, vals))
    if spectrum.n_terms > N:
        # exact identity tail, minus weights beyond n_terms when truncated
        tail = spectrum.remainder(N)
        if spectrum.n_terms < spectrum.n_max:
            tail -= spectrum.remainder(spectrum.n_terms)
        # next order: -kernel'(t) * sum_{n>N} w_n / (D_v^2 lam_n^2), O(N^-3)
        m = spectrum.n_terms
        inv = spectrum.weights[N:m] / spectrum.lambdas[N:m] ** 2
        second = float(np.sum(inv))
        if m == spectrum.n_max and inv.size:
            second -= 0.5 * float(inv[-1])  # alternating remainder beyond n_max
        h = 1e-5 * t
        dk = (kernel(t) - kernel(t - h)) / h if t - h > 0 else 0.0
        total += kernel(t) * tail / spectrum.D_v - dk * second / spectrum.D_v**2
    return total
