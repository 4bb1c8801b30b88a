"""Monte Carlo experiments built from the compiled kernels.

Realization ``k`` of a run with root seed ``s`` draws from
``default_rng(SeedSequence([s, k]))``, so results do not depend on the worker
count (``MFTX_WORKERS``, default 1).
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from ..curves import CirCurve
from ..params import BitTxParams, ChannelParams, MobileParams, SimParams, StaticGeometry, validate
from . import kernels

WORKERS_ENV = "MFTX_WORKERS"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def realization_rng(root_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([root_seed, index]))


@dataclass
class RealizationRecord:
    """Outcome of one realization. Times are measured from the first bit start."""

    index: int
    seed: int
    fusion_times: np.ndarray
    fusion_points: np.ndarray
    absorption_times: np.ndarray
    counts: np.ndarray
    n_degraded: int = 0
    n_alive: int = 0
    eta: int = 1

    @property
    def n_fused(self) -> int:
        return int(np.count_nonzero(np.isfinite(self.fusion_times)))

    def conserved(self) -> bool:
        return self.n_fused * self.eta == (len(self.absorption_times) + self.n_degraded
                                          + self.n_alive)

    def to_json(self) -> str:
        fused = np.isfinite(self.fusion_times)
        # unfused vesicles keep their slot as null
        return json.dumps({
            "index": self.index, "seed": self.seed, "eta": self.eta,
            "fusion_times": [float(t) if f else None for t, f in zip(self.fusion_times, fused)],
            "fusion_points": [p.tolist() if f else None
                              for p, f in zip(self.fusion_points, fused)],
            "absorption_times": self.absorption_times.tolist(),
            "counts": self.counts.tolist(),
            "n_degraded": self.n_degraded, "n_alive": self.n_alive,
        })

    @classmethod
    def from_json(cls, line: str) -> "RealizationRecord":
        d = json.loads(line)
        ft = np.array([np.nan if t is None else t for t in d["fusion_times"]], dtype=float)
        fp = np.array([[np.nan] * 3 if p is None else p for p in d["fusion_points"]],
                      dtype=float).reshape(len(ft), 3)
        return cls(d["index"], d["seed"], ft, fp, np.array(d["absorption_times"], dtype=float),
                   np.array(d["counts"], dtype=np.int64), d["n_degraded"], d["n_alive"], d["eta"])

    def same_as(self, other: "RealizationRecord") -> bool:
        """Bit-identical comparison, treating unfused NaN slots as equal."""
        return (self.index == other.index and self.seed == other.seed
                and np.array_equal(self.fusion_times, other.fusion_times, equal_nan=True)
                and np.array_equal(self.fusion_points, other.fusion_points, equal_nan=True)
                and np.array_equal(self.absorption_times, other.absorption_times)
                and np.array_equal(self.counts, other.counts)
                and (self.n_degraded, self.n_alive) == (other.n_degraded, other.n_alive))


def write_records(path: str | Path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_records(path: str | Path) -> list[RealizationRecord]:
    with open(path) as fh:
        return [RealizationRecord.from_json(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class _Plan:
    """Everything a worker needs to run realizations."""

    params: ChannelParams
    sim: SimParams
    release_times: np.ndarray
    edges: np.ndarray
    t_end: float
    offset: float
    mobile: bool
    l0: float
    D_mol: float
    D1: float


def _plan(params: ChannelParams, scenario, sim: SimParams, release_times, edges, t_end) -> _Plan:
    validate(params)
    validate(sim, params)
    if isinstance(scenario, MobileParams):
        validate(scenario, params)
        if sim.membrane_mode == "reflecting":
            raise ValueError("the reflecting membrane is only supported for a static TX")
        off = scenario.t_prime
        return _Plan(params, sim, np.asarray(release_times, float) + off,
                     np.asarray(edges, float) + off, t_end + off, off, True,
                     scenario.l0, scenario.D2, scenario.D1)
    geom = scenario if isinstance(scenario, StaticGeometry) else StaticGeometry(float(scenario))
    validate(geom, params)
    return _Plan(params, sim, np.asarray(release_times, float), np.asarray(edges, float),
                 t_end, 0.0, False, geom.l, params.D_sigma, 0.0)


def _one(plan: _Plan, index: int) -> RealizationRecord:
    p, sim = plan.params, plan.sim
    rng = realization_rng(sim.seed, index)
    ft, fp, ab, n_deg, n_alive = kernels.run_realization(
        rng, plan.release_times, p.N_v, p.eta, p.r_T, p.r_R, p.D_v, p.k_f, plan.D_mol, p.k_d,
        sim.dt, plan.t_end, sim.membrane_mode == "reflecting", plan.mobile, plan.D1, plan.l0,
        sim.crossing == "bridge")
    ab = np.sort(ab)
    counts = np.histogram(ab, bins=plan.edges)[0].astype(np.int64) if len(plan.edges) > 1 \
        else np.zeros(0, np.int64)
    return RealizationRecord(index, sim.seed, ft - plan.offset, fp, ab - plan.offset, counts,
                             int(n_deg), int(n_alive), p.eta)


def _run_range(plan: _Plan, indices) -> list[RealizationRecord]:
    return [_one(plan, int(k)) for k in indices]


def _run(plan: _Plan, n: int, workers: int | None = None) -> list[RealizationRecord]:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or n < 2:
        return _run_range(plan, range(n))
    chunks = [c for c in np.array_split(np.arange(n), workers * 4) if len(c)]
    with ProcessPoolExecutor(workers) as ex:
        parts = ex.map(partial(_run_range, plan), chunks)
        return [rec for part in parts for rec in part]


@dataclass
class ImpulseResult:
    pdf: CirCurve
    cdf: CirCurve
    records: list[RealizationRecord] = field(repr=False)
    total_molecules: int = 0

    def fraction_at(self, times) -> np.ndarray:
        """Empirical absorbed fraction (of all vesicle-borne molecules) at ``times``."""
        return empirical_fraction(self.records, times, self.total_molecules)


def empirical_fraction(records, times, total_molecules: int) -> np.ndarray:
    ab = np.sort(np.concatenate([r.absorption_times for r in records]))
    return np.searchsorted(ab, np.asarray(times, dtype=float), side="right") / total_molecules


def run_impulse_experiment(params: ChannelParams, scenario, sim: SimParams = SimParams(),
                           record_path: str | Path | None = None,
                           workers: int | None = None) -> ImpulseResult:
    """N_v vesicles leave the TX centre at t=0 (static) or t' (mobile).

    ``scenario`` is a StaticGeometry, a centre distance, or MobileParams.
    Returns histogram density and absorbed-fraction curves over
    [0, sim.t_end] (measured from the release) with ``sim.bin_width`` bins.
    """
    plan = _plan(params, scenario, sim, [0.0], [0.0, sim.t_end], sim.t_end)
    records = _run(plan, sim.realizations, workers)
    if record_path is not None:
        write_records(record_path, records)
    total = sim.realizations * params.total_molecules
    n_bins = max(1, int(round(sim.t_end / sim.bin_width)))
    edges = np.linspace(0.0, sim.t_end, n_bins + 1)
    ab = np.concatenate([r.absorption_times for r in records])
    hist = np.histogram(ab, bins=edges)[0]
    width = np.diff(edges)
    meta = {"r_T": params.r_T, "r_R": params.r_R, "D_v": params.D_v, "k_f": params.k_f,
            "k_d": params.k_d, "realizations": sim.realizations, "seed": sim.seed,
            "membrane_mode": sim.membrane_mode,
            "scenario": "mobile" if plan.mobile else "static", "l": plan.l0}
    pdf = CirCurve(0.5 * (edges[:-1] + edges[1:]), hist / (width * total), "pdf", "empirical",
                   meta)
    cdf = CirCurve(edges[1:], np.minimum(np.cumsum(hist) / total, 1.0), "cdf", "empirical", meta)
    return ImpulseResult(pdf, cdf, records, total)


@dataclass
class BitstreamResult:
    bits: np.ndarray
    counts: np.ndarray  # (realizations, W)
    records: list[RealizationRecord] = field(repr=False)

    def count_cdf(self, w: int, xi_max: int | None = None) -> np.ndarray:
        """Empirical Pr(N_w <= k) for k = 0..xi_max (w is 1-based)."""
        c = self.counts[:, w - 1]
        xi_max = int(c.max()) if xi_max is None else xi_max
        return np.cumsum(np.bincount(c, minlength=xi_max + 1)[: xi_max + 1]) / len(c)

    def count_pmf(self, w: int, xi_max: int | None = None) -> np.ndarray:
        c = self.counts[:, w - 1]
        xi_max = int(c.max()) if xi_max is None else xi_max
        return np.bincount(c, minlength=xi_max + 1)[: xi_max + 1] / len(c)


def run_bitstream_experiment(params: ChannelParams, scenario, sim: SimParams, tx: BitTxParams,
                             bits, record_path: str | Path | None = None,
                             workers: int | None = None) -> BitstreamResult:
    """ON/OFF keyed transmission of ``bits`` with bit length tx.phi.

    Bit j starts at (j-1) phi (plus t' when mobile); N_v vesicles leave the
    TX centre at the start of every 1-bit. Molecules keep diffusing across
    bit boundaries, and each realization reports the absorptions counted in
    every bit window.
    """
    bits = np.asarray(getattr(bits, "bits", bits), dtype=np.int64)
    if bits.ndim != 1 or len(bits) == 0 or np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be a non-empty 0/1 sequence")
    starts = np.arange(len(bits)) * tx.phi
    edges = np.append(starts, len(bits) * tx.phi)
    plan = _plan(params, scenario, sim, starts[bits == 1], edges, edges[-1])
    records = _run(plan, sim.realizations, workers)
    if record_path is not None:
        write_records(record_path, records)
    counts = np.array([r.counts for r in records], dtype=np.int64).reshape(len(records), len(bits))
    return BitstreamResult(bits, counts, records)


def simulate_fusion_times(params: ChannelParams, sim: SimParams, n: int) -> np.ndarray:
    """Fusion times of ``n`` vesicles started at the TX centre (NaN if unfused by t_end)."""
    validate(params)
    validate(sim, params)
    rng = realization_rng(sim.seed, 0)
    return kernels.run_fusion_times(rng, n, params.r_T, params.D_v, params.k_f, sim.dt, sim.t_end)


def simulate_uniform_release(params: ChannelParams, geom, sim: SimParams, n: int):
    """Absorption times and status codes for ``n`` molecules released uniformly on
    the TX membrane at t=0 (status 0 absorbed, 1 degraded, 2 still diffusing)."""
    validate(params)
    validate(sim, params)
    l = geom.l if isinstance(geom, StaticGeometry) else float(geom)
    validate(StaticGeometry(l), params)
    rng = realization_rng(sim.seed, 0)
    return kernels.run_uniform_release(rng, n, params.r_T, params.r_R, l, params.D_sigma,
                                       params.k_d, sim.dt, sim.t_end,
                                       sim.membrane_mode == "reflecting",
                                       sim.crossing == "bridge")
