"""Bit-sequence transmission: Poisson detection model, BER and the mobile count PMF."""

from __future__ import annotations

import csv
import hashlib
import itertools
import math
from dataclasses import dataclass, field, asdict, is_dataclass
from pathlib import Path

import numpy as np
from scipy.special import pdtr
from scipy.stats import poisson

from .params import BitTxParams, ChannelParams, MobileParams
from .release import EigenSpectrum, release_cdf, release_window
from .static import e2e_hitting_cdf, uniform_cdf_values


@dataclass(frozen=True)
class BitSequence:
    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) < 1:
            raise ValueError("bit sequence must hold at least one bit")
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @property
    def W(self) -> int:
        return len(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    @classmethod
    def random(cls, W: int, P1: float, rng: np.random.Generator) -> "BitSequence":
        return cls(tuple(int(b) for b in rng.random(W) < P1))


@dataclass(frozen=True)
class PmfVector:
    """Probabilities of counts 0..xi_max; whatever mass lies beyond is ``truncation_mass``."""

    probs: np.ndarray
    stderr: np.ndarray | None = None
    n_samples: int = 0
    truncation_mass: float = field(init=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("probs must be a non-empty 1-D array")
        if np.any(probs < 0):
            raise ValueError("probabilities must be >= 0")
        total = float(probs.sum())
        if total > 1 + 1e-9:
            raise ValueError(f"probabilities sum to {total} > 1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "truncation_mass", 1.0 - total)

    @property
    def xi_max(self) -> int:
        return self.probs.size - 1

    def cdf_below(self, xi) -> np.ndarray:
        """Pr(N < xi) for integer thresholds ``xi`` (mass beyond xi_max counts as >= xi)."""
        cum = np.concatenate([[0.0], np.cumsum(self.probs)])
        xi = np.asarray(xi)
        return cum[np.clip(xi, 0, self.probs.size)]

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def variance(self) -> float:
        k = np.arange(self.probs.size)
        m = self.mean()
        return float(np.dot((k - m) ** 2, self.probs))


@dataclass(frozen=True)
class ReleaseIntervals:
    T_i: float
    T_e_i: float
    C: int
    delta_tau: float
    midpoints: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.midpoints) <= 0):
            raise ValueError("midpoints must be strictly increasing")


# --- static scenario -----------------------------------------------------

def fraction_table(spectrum: EigenSpectrum, params: ChannelParams, geom, phi: float,
                   W: int) -> np.ndarray:
    """P_e(k phi) for k = 0..W, the only values the static BER needs."""
    times = phi * np.arange(W + 1)
    return np.asarray(e2e_hitting_cdf(spectrum, params, geom, times))


def static_interval_mean(spectrum: EigenSpectrum, params: ChannelParams, geom, bits: BitSequence,
                         w: int, phi: float, table: np.ndarray | None = None) -> float:
    """Expected molecules absorbed in bit interval ``w`` (1-based) given ``bits``."""
    if not 1 <= w <= bits.W:
        raise ValueError(f"w must lie in [1, {bits.W}]")
    if table is None:
        table = fraction_table(spectrum, params, geom, phi, w)
    psi = 0.0
    for i in range(1, w + 1):
        if bits[i - 1]:
            psi += table[w - i + 1] - table[w - i]
    return params.N_v * params.eta * psi


def poisson_cdf(psi, xi):
    """Pr(N < xi) for N ~ Poisson(psi); zero for xi = 0."""
    psi = np.asarray(psi, dtype=float)
    xi = np.asarray(xi)
    if np.any(psi < 0):
        raise ValueError("psi must be >= 0")
    if np.any(xi < 0):
        raise ValueError("xi must be >= 0")
    out = np.where(xi >= 1, pdtr(np.maximum(xi - 1, 0), psi), 0.0)
    return float(out) if out.ndim == 0 else out


def detect(count: int, xi: int) -> int:
    """Threshold detector: 1 when at least ``xi`` molecules were counted."""
    if count < 0:
        raise ValueError("count must be >= 0")
    return int(count >= xi)


def _histories(n: int):
    return itertools.product((0, 1), repeat=n)


def static_avg_ber(spectrum: EigenSpectrum, params: ChannelParams, geom, tx: BitTxParams,
                   xi=None, table: np.ndarray | None = None):
    """Average BER over all bit positions and all equally likely histories.

    ``xi`` defaults to ``tx.xi``; an array of thresholds gives an array of BERs.
    """
    if tx.W > 20:
        raise ValueError("W > 20 makes history enumeration impractical")
    xi = tx.xi if xi is None else xi
    xi_arr = np.atleast_1d(np.asarray(xi))
    if table is None:
        table = fraction_table(spectrum, params, geom, tx.phi, tx.W)
    total = params.N_v * params.eta
    inc = np.diff(table)  # inc[k] = P_e((k+1) phi) - P_e(k phi)
    Q = np.zeros(xi_arr.shape)
    for w in range(1, tx.W + 1):
        acc = np.zeros(xi_arr.shape)
        for hist in _histories(w - 1):
            isi = sum(inc[w - i] for i, b in enumerate(hist, start=1) if b)
            psi1 = total * (isi + inc[0])
            psi0 = total * isi
            acc += tx.P1 * poisson_cdf(psi1, xi_arr) + tx.P0 * (1.0 - poisson_cdf(psi0, xi_arr))
        Q += acc / 2 ** (w - 1)
    Q /= tx.W
    return float(Q[0]) if np.ndim(xi) == 0 else Q


# --- mobile scenario -----------------------------------------------------

def build_release_intervals(spectrum: EigenSpectrum, params: ChannelParams, tx: BitTxParams,
                            i: int, w: int, t_prime: float,
                            tau_p: float | None = None) -> ReleaseIntervals:
    """Discretise the release of bit ``i`` as seen from bit interval ``w`` (both 1-based).

    Expected release counts use the release fraction measured from the start
    of bit ``i``.
    """
    if not 1 <= i <= w:
        raise ValueError("need 1 <= i <= w")
    tau_p = release_window(spectrum) if tau_p is None else tau_p
    T_i = t_prime + (i - 1) * tx.phi
    T_w1 = t_prime + w * tx.phi
    T_e = T_i + tau_p if T_i + tau_p <= T_w1 else T_w1
    dtau = (T_e - T_i) / tx.C
    c = np.arange(1, tx.C + 1)
    mids = T_i + (2 * c - 1) * dtau / 2.0
    F = release_cdf(spectrum, c * dtau)
    F_prev = release_cdf(spectrum, (c - 1) * dtau)
    counts = params.N_v * params.eta * (F - F_prev)
    return ReleaseIntervals(T_i, T_e, tx.C, dtau, mids, counts)


def mobile_conditional_mean(intervals: ReleaseIntervals, distances, params: ChannelParams,
                            mobile: MobileParams, w: int, tx: BitTxParams, b_i: int = 1,
                            t_prime: float | None = None):
    """Expected count in bit interval ``w`` given the centre distance at each release midpoint.

    ``distances`` has C entries along its last axis; leading axes are
    vectorised over (e.g. Monte Carlo chains).
    """
    d = np.asarray(distances, dtype=float)
    if d.shape[-1] != intervals.C:
        raise ValueError(f"need {intervals.C} distances, got {d.shape[-1]}")
    if np.any(d <= params.r_R):
        raise ValueError("distance must exceed r_R")
    if not b_i:
        return np.zeros(d.shape[:-1]) if d.ndim > 1 else 0.0
    tp = mobile.t_prime if t_prime is None else t_prime
    T_w = tp + (w - 1) * tx.phi
    T_w1 = tp + w * tx.phi
    up = uniform_cdf_values(params, d, T_w1 - intervals.midpoints, mobile.D2)
    lo = uniform_cdf_values(params, d, np.maximum(T_w - intervals.midpoints, 0.0), mobile.D2)
    psi = np.sum(intervals.counts * (up - lo), axis=-1)
    return float(psi) if np.ndim(psi) == 0 else psi


def sample_distance_chains(mobile: MobileParams, times, n_chains: int, rng: np.random.Generator):
    """Centre distances at the increasing ``times`` for ``n_chains`` independent paths.

    The TX-RX separation vector performs a Gaussian walk with per-axis
    variance 2 D1 per unit time, starting from l0 at time 0.
    """
    times = np.asarray(times, dtype=float)
    pos = np.zeros((n_chains, 3))
    pos[:, 0] = mobile.l0
    out = np.empty((n_chains, times.size))
    prev = 0.0
    for c, t in enumerate(times):
        pos += rng.normal(0.0, math.sqrt(2.0 * mobile.D1 * (t - prev)), (n_chains, 3))
        out[:, c] = np.linalg.norm(pos, axis=1)
        prev = t
    return out


def default_xi_max(mean: float) -> int:
    """Truncation point leaving a negligible Poisson tail above ``mean``."""
    return int(math.ceil(mean + 10.0 * math.sqrt(max(mean, 0.0)) + 20.0))


@dataclass
class PsiSamples:
    psi: np.ndarray
    clamped: int
    intervals: ReleaseIntervals


def sample_psi(spectrum: EigenSpectrum, params: ChannelParams, mobile: MobileParams,
               tx: BitTxParams, w: int, i: int, n_chains: int, rng: np.random.Generator,
               tau_p: float | None = None) -> PsiSamples:
    """Draw the conditional mean count for ``n_chains`` sampled distance chains.

    Distances below r_T + r_R (overlapping spheres) are clamped to r_T + r_R;
    the number of clamped entries is reported.
    """
    iv = build_release_intervals(spectrum, params, tx, i, w, mobile.t_prime, tau_p)
    d = sample_distance_chains(mobile, iv.midpoints, n_chains, rng)
    floor = params.r_T + params.r_R
    clamped = int(np.count_nonzero(d < floor))
    d = np.maximum(d, floor)
    return PsiSamples(mobile_conditional_mean(iv, d, params, mobile, w, tx), clamped, iv)


def _poisson_mixture(psi: np.ndarray, xi_max: int) -> np.ndarray:
    k = np.arange(xi_max + 1)
    return poisson.pmf(k[None, :], psi[:, None]).mean(axis=0)


def mobile_pmf_single(spectrum: EigenSpectrum, params: ChannelParams, mobile: MobileParams,
                      tx: BitTxParams, w: int, i: int, xi_max: int | None = None,
                      n_chains: int = 100_000, seed: int = 0, n_batches: int = 10,
                      tau_p: float | None = None) -> PmfVector:
    """Monte Carlo estimate of the count PMF in interval ``w`` for a bit-1 sent at ``i``.

    The distance chain is sampled ``n_chains`` times; the conditional Poisson
    PMFs are averaged. Standard errors come from ``n_batches`` batch means.
    """
    batches = _batched_pmfs(spectrum, params, mobile, tx, w, i, xi_max, n_chains, seed,
                            n_batches, tau_p)
    return _combine_batches(batches, n_chains)


def _batched_pmfs(spectrum, params, mobile, tx, w, i, xi_max, n_chains, seed, n_batches, tau_p):
    tau_p = release_window(spectrum) if tau_p is None else tau_p
    n_batches = max(1, min(n_batches, n_chains))
    sizes = np.full(n_batches, n_chains // n_batches)
    sizes[: n_chains % n_batches] += 1
    children = np.random.SeedSequence([seed, w, i]).spawn(n_batches)
    psis = [sample_psi(spectrum, params, mobile, tx, w, i, int(n), np.random.default_rng(ss),
                       tau_p).psi for n, ss in zip(sizes, children)]
    if xi_max is None:
        xi_max = default_xi_max(float(np.max(np.concatenate(psis))))
    return np.array([_poisson_mixture(p, xi_max) for p in psis]), sizes


def _combine_batches(batches, n_chains):
    pmfs, sizes = batches
    weights = sizes / sizes.sum()
    probs = weights @ pmfs
    stderr = (np.std(pmfs, axis=0, ddof=1) / math.sqrt(len(sizes)) if len(sizes) > 1
              else np.full(probs.shape, np.nan))
    return PmfVector(probs, stderr, n_chains)


def mobile_pmf_total(pmfs: list[PmfVector], xi_max: int | None = None) -> PmfVector:
    """PMF of the sum of independent counts, truncated at ``xi_max``."""
    if not pmfs:
        probs = np.zeros((xi_max or 0) + 1)
        probs[0] = 1.0
        return PmfVector(probs)
    if xi_max is None:
        xi_max = max(p.xi_max for p in pmfs)
    out = np.zeros(xi_max + 1)
    out[0] = 1.0
    for p in pmfs:
        out = np.convolve(out, p.probs[: xi_max + 1])[: xi_max + 1]
    return PmfVector(np.clip(out, 0.0, None), n_samples=min(p.n_samples for p in pmfs))


@dataclass(frozen=True)
class BerEstimate:
    xi: np.ndarray
    Q: np.ndarray
    stderr: np.ndarray


def mobile_avg_ber(spectrum: EigenSpectrum, params: ChannelParams, mobile: MobileParams,
                   tx: BitTxParams, xi=None, n_chains: int = 100_000, seed: int = 0,
                   n_batches: int = 10, xi_max: int | None = None) -> BerEstimate:
    """Average BER for the mobile link, with a batch-means standard error.

    Per-(w, i) count PMFs are estimated once and convolved for every history.
    """
    if tx.W > 10:
        raise ValueError("W > 10 makes history enumeration impractical")
    xi_arr = np.atleast_1d(np.asarray(tx.xi if xi is None else xi))
    tau_p = release_window(spectrum)
    per = n_chains // n_batches
    # psi samples first so that a common xi_max can be chosen
    psis = {}
    for w in range(1, tx.W + 1):
        for i in range(1, w + 1):
            children = np.random.SeedSequence([seed, w, i]).spawn(n_batches)
            psis[(w, i)] = [sample_psi(spectrum, params, mobile, tx, w, i, per,
                                       np.random.default_rng(ss), tau_p).psi for ss in children]
    if xi_max is None:
        worst = max(sum(float(np.max(np.concatenate(psis[(w, i)]))) for i in range(1, w + 1))
                    for w in range(1, tx.W + 1))
        xi_max = default_xi_max(worst)
    xi_max = max(xi_max, int(xi_arr.max()))
    pmf = {k: np.array([_poisson_mixture(p, xi_max) for p in v]) for k, v in psis.items()}
    per_batch = np.zeros((n_batches, xi_arr.size))
    for b in range(n_batches):
        Q = np.zeros(xi_arr.size)
        for w in range(1, tx.W + 1):
            acc = np.zeros(xi_arr.size)
            for hist in _histories(w - 1):
                isi = mobile_pmf_total([PmfVector(pmf[(w, i)][b]) for i, bit in
                                        enumerate(hist, start=1) if bit], xi_max)
                with_one = mobile_pmf_total([isi, PmfVector(pmf[(w, w)][b])], xi_max)
                acc += (tx.P1 * with_one.cdf_below(xi_arr)
                        + tx.P0 * (1.0 - isi.cdf_below(xi_arr)))
            Q += acc / 2 ** (w - 1)
        per_batch[b] = Q / tx.W
    est = per_batch.mean(axis=0)
    err = (per_batch.std(axis=0, ddof=1) / math.sqrt(n_batches) if n_batches > 1
           else np.full(est.shape, np.nan))
    return BerEstimate(xi_arr, est, err)


# --- validation metric and output ----------------------------------------

def r_squared(observed, predicted) -> float:
    """1 - SS_res / SS_tot with SS_tot taken about the mean of ``observed``."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.shape != pred.shape or obs.ndim != 1 or obs.size < 2:
        raise ValueError("need two equal-length vectors with at least two entries")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("observed values have zero variance")
    return 1.0 - float(np.sum((obs - pred) ** 2)) / ss_tot


def fingerprint(*objs) -> str:
    """Short stable hash of parameter objects."""
    parts = []
    for o in objs:
        parts.append(repr(sorted(asdict(o).items())) if is_dataclass(o) else repr(o))
    return hashlib.sha1("|".join(parts).encode()).hexdigest()[:12]


def write_ber_csv(path: str | Path, rows) -> None:
    """rows: iterable of (xi, Q, stderr, scenario, fingerprint)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["xi", "Q", "stderr", "scenario", "fingerprint"])
        for xi, q, se, scen, fp in rows:
            wr.writerow([int(xi), repr(float(q)), repr(float(se)), scen, fp])


def write_pmf_csv(path: str | Path, pmf: PmfVector) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["count", "prob"])
        for k, p in enumerate(pmf.probs):
            wr.writerow([k, repr(float(p))])
