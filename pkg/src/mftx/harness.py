"""Experiment specs, figure presets and the runner behind the command line."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import platform
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from . import comm, mobile as mob, release, static
from .curves import CirCurve, log_grid, write_curves_csv
from .params import (SECTIONS, BitTxParams, ChannelParams, MobileParams, ParameterError,
                     SimParams, StaticGeometry, validate)
from .sim import simulator

SCENARIOS = ("static", "mobile")
MODES = ("analytic", "simulate", "validate")
TARGETS = ("release", "cir", "ber", "pmf", "asymptote", "eigen")

# (target, scenario) -> modes that make sense
SUPPORTED = {
    ("eigen", "static"): ("analytic",), ("eigen", "mobile"): ("analytic",),
    ("release", "static"): MODES, ("release", "mobile"): MODES,
    ("cir", "static"): MODES, ("cir", "mobile"): MODES,
    ("ber", "static"): ("analytic",), ("ber", "mobile"): ("analytic",),
    ("pmf", "static"): MODES, ("pmf", "mobile"): MODES,
    ("asymptote", "static"): ("analytic",),
}

PARAM_KEYS: dict[str, list[str]] = {}
for _section, _cls in SECTIONS.items():
    for _f in dataclasses.fields(_cls):
        if _f.init:
            PARAM_KEYS.setdefault(_f.name, []).append(_section)


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    """One experiment: what to compute, with which parameters, swept over what.

    ``overrides`` maps parameter names (e.g. ``D_v``, ``l``, ``phi``) to values.
    A sweep axis is ``(name, values)``; a comma-joined name such as
    ``"D_v,k_f"`` sweeps the listed parameters together over value tuples.
    Axes combine as a Cartesian product.
    """

    scenario: str = "static"
    mode: str = "analytic"
    target: str = "cir"
    overrides: dict = field(default_factory=dict)
    sweeps: list = field(default_factory=list)
    output: str = "results"
    seed: int = 0
    options: dict = field(default_factory=dict)
    preset: str | None = None
    base: dict = field(default_factory=dict)  # section name -> params object (from --config)

    def check(self) -> None:
        errors = []
        if self.scenario not in SCENARIOS:
            errors.append(f"scenario must be one of {SCENARIOS}")
        if self.mode not in MODES:
            errors.append(f"mode must be one of {MODES}")
        if self.target not in TARGETS:
            errors.append(f"target must be one of {TARGETS}")
        if not errors:
            allowed = SUPPORTED.get((self.target, self.scenario), ())
            if self.mode not in allowed:
                errors.append(f"{self.target}/{self.scenario} does not support mode {self.mode!r}"
                              f" (supported: {', '.join(allowed) or 'none'})")
        for name in self.overrides:
            if name not in PARAM_KEYS:
                errors.append(f"unknown parameter {name!r}")
        for axis in self.sweeps:
            names, values = _axis(axis)
            for name in names:
                if name not in PARAM_KEYS:
                    errors.append(f"sweep axis references unknown parameter {name!r}")
            for v in values:
                if len(names) > 1 and (not isinstance(v, (tuple, list)) or len(v) != len(names)):
                    errors.append(f"sweep axis {','.join(names)} needs {len(names)}-tuples")
                    break
            if not values:
                errors.append(f"sweep axis {','.join(names)} has no values")
        if errors:
            raise SpecError("; ".join(errors))

    def points(self) -> list[dict]:
        """Parameter assignments of every sweep point (a single empty one without sweeps)."""
        axes = []
        for axis in self.sweeps:
            names, values = _axis(axis)
            axes.append([dict(zip(names, v if len(names) > 1 else (v,))) for v in values])
        out = []
        for combo in itertools.product(*axes):
            merged: dict = {}
            for part in combo:
                merged.update(part)
            out.append(merged)
        return out or [{}]


def _axis(axis):
    name, values = axis
    names = [n.strip() for n in name.split(",")] if isinstance(name, str) else list(name)
    return names, list(values)


@dataclass(frozen=True)
class PointParams:
    channel: ChannelParams
    geom: StaticGeometry
    mobile: MobileParams
    tx: BitTxParams
    sim: SimParams


def _base_objects(spec: ExperimentSpec, point: dict | None = None) -> dict:
    values = dict(spec.overrides)
    values.update(point or {})
    objs = {name: spec.base.get(name, cls()) for name, cls in SECTIONS.items()}
    objs["SimParams"] = dataclasses.replace(objs["SimParams"], seed=spec.seed)
    for key, value in values.items():
        for section in PARAM_KEYS[key]:
            objs[section] = dataclasses.replace(objs[section], **{key: value})
    return objs


def build_params(spec: ExperimentSpec, point: dict) -> PointParams:
    """Apply base config, overrides and sweep values; validate the result."""
    objs = _base_objects(spec, point)
    ch = objs["ChannelParams"]
    mp = dataclasses.replace(objs["MobileParams"], D_sigma=ch.D_sigma)
    pp = PointParams(ch, objs["StaticGeometry"], mp, objs["BitTxParams"], objs["SimParams"])
    validate(pp.channel)
    validate(pp.tx)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        validate(pp.sim, pp.channel)
    if spec.scenario == "static":
        validate(pp.geom, pp.channel)
    else:
        validate(pp.mobile, pp.channel)
    return pp


def peak_time(curve: CirCurve):
    """Grid argmax of a density curve refined by a parabola through the three bracketing samples."""
    if curve.kind != "pdf":
        raise ValueError("peak_time needs a pdf curve")
    if len(curve) < 3:
        raise ValueError("peak_time needs at least 3 samples")
    t, v = curve.times, curve.values
    k = int(np.argmax(v))
    if k == 0 or k == len(v) - 1:
        warnings.warn("peak at the grid boundary; extend the horizon", RuntimeWarning,
                      stacklevel=2)
        return float(t[k]), float(v[k])
    x = t[k - 1:k + 2]
    y = v[k - 1:k + 2]
    # Lagrange form of the parabola through three points
    d0 = (x[0] - x[1]) * (x[0] - x[2])
    d1 = (x[1] - x[0]) * (x[1] - x[2])
    d2 = (x[2] - x[0]) * (x[2] - x[1])
    a = y[0] / d0 + y[1] / d1 + y[2] / d2
    b = -(y[0] * (x[1] + x[2]) / d0 + y[1] * (x[0] + x[2]) / d1 + y[2] * (x[0] + x[1]) / d2)
    c = y[0] * x[1] * x[2] / d0 + y[1] * x[0] * x[2] / d1 + y[2] * x[0] * x[1] / d2
    if a >= 0:
        return float(t[k]), float(v[k])
    tp = -b / (2 * a)
    return float(tp), float(c - b * b / (4 * a))


# --- presets -------------------------------------------------------------

FIG5_SETS = [(9.0, 30.0), (9.0, 2.0), (50.0, 30.0)]
FIG6_SETS = [(9.0, 30.0), (9.0, 5.0), (9.0, 2.0), (18.0, 30.0), (50.0, 30.0)]
RT_GRID = [5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0]
REFLECTING_L = [40.0, 38.0, 36.0, 34.0, 32.0, 28.0, 26.0, 24.0, 22.0, 21.5, 21.0]
TABLE3_PAIRS = [(10, 100), (20, 50), (50, 20), (100, 10), (200, 5), (500, 2), (1000, 1)]


def _presets() -> dict:
    return {
        "fig5a": ExperimentSpec(target="release", sweeps=[("D_v,k_f", FIG5_SETS)],
                                options={"quantity": "pdf", "horizon": 20.0}),
        "fig5b": ExperimentSpec(target="release", sweeps=[("D_v,k_f", FIG5_SETS)],
                                options={"quantity": "cdf", "horizon": 20.0}),
        "fig6": ExperimentSpec(target="release", sweeps=[("D_v,k_f", FIG6_SETS), ("r_T", RT_GRID)],
                               options={"quantity": "pdf", "peak": True, "horizon": 20.0}),
        "fig7a": ExperimentSpec(target="cir", sweeps=[("D_v,k_f", FIG5_SETS)],
                                options={"quantities": ["e2e_pdf", "gradual_pdf", "uniform_pdf"],
                                         "horizon": 20.0}),
        "fig7b": ExperimentSpec(mode="validate", target="cir", sweeps=[("D_v,k_f", FIG5_SETS)],
                                overrides={"membrane_mode": "reflecting"},
                                options={"horizon": 20.0}),
        "fig8a": ExperimentSpec(scenario="mobile", target="cir",
                                sweeps=[("D_v,k_f", FIG5_SETS)],
                                overrides={"t_prime": 2.0}, options={"horizon": 10.0}),
        "fig8b": ExperimentSpec(scenario="mobile", target="cir",
                                sweeps=[("t_prime", [2.0, 5.0, 10.0])],
                                options={"horizon": 10.0}),
        "fig9a": ExperimentSpec(target="ber", overrides={"k_f": 30.0},
                                sweeps=[("D_v,phi", [(9.0, 2.0), (50.0, 2.0), (9.0, 4.0)])],
                                options={"xi": list(range(1, 101))}),
        "fig9b": ExperimentSpec(scenario="mobile", target="ber",
                                overrides={"D_v": 50.0, "k_f": 30.0},
                                sweeps=[("D_T,D_R,eta", [(8.0, 8.0, 5), (10.0, 10.0, 5),
                                                         (8.0, 8.0, 10)])],
                                options={"xi": list(range(1, 101))}),
        "table-R2-static": ExperimentSpec(target="pmf", mode="validate",
                                          overrides={"D_v": 18.0, "k_f": 30.0},
                                          sweeps=[("N_v,eta", TABLE3_PAIRS)]),
        "table-R2-mobile": ExperimentSpec(scenario="mobile", target="pmf", mode="validate",
                                          overrides={"D_v": 50.0, "k_f": 30.0, "N_v": 200,
                                                     "C": 3},
                                          sweeps=[("eta", [5, 10, 20, 30, 40, 50])]),
        "table-R2-reflecting": ExperimentSpec(target="cir", mode="validate",
                                              overrides={"D_v": 9.0, "k_f": 30.0,
                                                         "membrane_mode": "reflecting"},
                                              sweeps=[("l", REFLECTING_L)],
                                              options={"horizon": 20.0}),
    }


PRESET_IDS = tuple(_presets())


def reproduce(figure_id: str) -> ExperimentSpec:
    """Preset spec for a figure or table id; unknown ids list the valid ones."""
    presets = _presets()
    if figure_id not in presets:
        raise SpecError(f"unknown figure id {figure_id!r}; available: {', '.join(presets)}")
    spec = presets[figure_id]
    spec.preset = figure_id
    spec.output = f"results/{figure_id}"
    return spec


# --- runner --------------------------------------------------------------

@dataclass
class RunResult:
    files: list[Path]
    manifest: Path
    rows: list[dict]
    wall_time: float


def _tag(point: dict) -> str:
    if not point:
        return "base"
    return "_".join(f"{k}={v}" for k, v in point.items()).replace("/", "-")


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _grid(spec: ExperimentSpec, default_horizon: float):
    horizon = float(spec.options.get("horizon", default_horizon))
    n = int(spec.options.get("n_points", 500))
    return horizon, log_grid(horizon, n, spec.options.get("start"))


def _realizations(spec, pp):
    n = spec.options.get("realizations")
    return pp.sim.replace(realizations=int(n)) if n is not None else pp.sim


def _run_eigen(spec, pp, out, tag):
    sp = release.solve_eigenvalues(pp.channel, int(spec.options.get("n_max", 10000)))
    n_show = min(int(spec.options.get("n_show", 100)), sp.n_max)
    res = release.boundary_residuals(sp)
    path = out / f"eigen_{tag}.csv"
    _write_table(path, ["n", "lambda", "weight", "residual"],
                 [[n + 1, repr(float(sp.lambdas[n])), repr(float(sp.weights[n])),
                   repr(float(res[n]))] for n in range(n_show)])
    total = release.eigen_sum(sp)
    return [path], {"eigen_sum": total, "identity": sp.identity_sum,
                    "rel_error": abs(total - sp.identity_sum) / sp.identity_sum,
                    "n_star": release.truncation_index(sp),
                    "tau_p": release.release_window(sp)}


def _run_release(spec, pp, out, tag):
    sp = release.solve_eigenvalues(pp.channel)
    quantity = spec.options.get("quantity", "pdf")
    horizon, times = _grid(spec, 20.0)
    files, row = [], {}
    meta = {"r_T": pp.channel.r_T, "D_v": pp.channel.D_v, "k_f": pp.channel.k_f}
    curves = []
    if spec.mode in ("analytic", "validate") or spec.options.get("peak"):
        vals = (release.release_pdf(sp, times) if quantity == "pdf"
                else release.release_cdf(sp, times))
        curves.append(CirCurve(times, np.asarray(vals), quantity, "analytic", meta))
    if spec.options.get("peak"):
        fine = log_grid(horizon, 4000, horizon * 1e-5)
        t_pk, v_pk = peak_time(CirCurve(fine, release.release_pdf(sp, fine), "pdf"))
        row.update(t_peak=t_pk, peak_value=v_pk)
    if spec.mode in ("simulate", "validate"):
        sim = _realizations(spec, pp).replace(t_end=horizon)
        n = int(spec.options.get("vesicles", sim.realizations * pp.channel.N_v))
        ft = simulator.simulate_fusion_times(pp.channel, sim, n)
        width = sim.bin_width
        edges = np.arange(0.0, horizon + 0.5 * width, width)
        hist = np.histogram(ft[np.isfinite(ft)], bins=edges)[0]
        if quantity == "pdf":
            emp = CirCurve(0.5 * (edges[:-1] + edges[1:]), hist / (width * n), "pdf", "empirical",
                           meta)
        else:
            emp = CirCurve(edges[1:], np.cumsum(hist) / n, "cdf", "empirical", meta)
        curves.append(emp)
        if spec.mode == "validate":
            ref = (release.release_pdf(sp, emp.times) if quantity == "pdf"
                   else release.release_cdf(sp, emp.times))
            row["r2"] = comm.r_squared(emp.values, ref)
    for c in curves:
        path = out / f"release_{quantity}_{c.source}_{tag}.csv"
        write_curves_csv(path, [c])
        files.append(path)
    return files, row


def _run_cir(spec, pp, out, tag):
    files, row = [], {}
    static_case = spec.scenario == "static"
    sp = release.solve_eigenvalues(pp.channel)
    default = ["e2e_pdf"] if spec.mode == "analytic" else ["e2e_cdf"]
    quantities = spec.options.get("quantities", [spec.options.get("quantity")]
                                  if spec.options.get("quantity") else default)
    horizon, times = _grid(spec, 20.0 if static_case else 10.0)
    if spec.mode == "analytic":
        for q in quantities:
            if static_case:
                c = static.static_curve(q, pp.channel, pp.geom, times, horizon, sp)
            else:
                c = mob.mobile_curve(q, pp.channel, pp.mobile, times, horizon, sp)
            path = out / f"cir_{q}_analytic_{tag}.csv"
            write_curves_csv(path, [c])
            files.append(path)
        return files, row
    sim = _realizations(spec, pp).replace(t_end=horizon)
    scen = pp.geom if static_case else pp.mobile
    res = simulator.run_impulse_experiment(pp.channel, scen, sim,
                                           record_path=out / f"records_{tag}.jsonl")
    files.append(out / f"records_{tag}.jsonl")
    for c in (res.pdf, res.cdf):
        path = out / f"cir_{c.kind}_empirical_{tag}.csv"
        write_curves_csv(path, [c])
        files.append(path)
    if spec.mode == "validate":
        n_val = int(spec.options.get("n_validate", 100))
        if static_case:
            grid = np.linspace(horizon / n_val, horizon, n_val)
            ref = np.asarray(static.e2e_hitting_cdf(sp, pp.channel, pp.geom, grid))
            acurve = CirCurve(grid, ref, "cdf", "analytic", {"l": pp.geom.l})
        else:
            acurve = mob.expected_e2e_fraction_curve(sp, pp.channel, pp.mobile, horizon)
            grid, ref = acurve.times, acurve.values
        path = out / f"cir_cdf_analytic_{tag}.csv"
        write_curves_csv(path, [acurve])
        files.append(path)
        row["r2"] = comm.r_squared(res.fraction_at(grid), ref)
        row["realizations"] = sim.realizations
    return files, row


def _run_ber(spec, pp, out, tag):
    sp = release.solve_eigenvalues(pp.channel)
    xi = np.asarray(spec.options.get("xi", list(range(1, 101))), dtype=int)
    path = out / f"ber_{spec.scenario}_{tag}.csv"
    if spec.scenario == "static":
        Q = np.atleast_1d(comm.static_avg_ber(sp, pp.channel, pp.geom, pp.tx, xi))
        err = np.zeros(Q.size)
        fp = comm.fingerprint(pp.channel, pp.geom, pp.tx)
    else:
        est = comm.mobile_avg_ber(sp, pp.channel, pp.mobile, pp.tx, xi,
                                  n_chains=int(spec.options.get("n_chains", 100_000)),
                                  seed=spec.seed)
        Q, err = est.Q, est.stderr
        fp = comm.fingerprint(pp.channel, pp.mobile, pp.tx)
    comm.write_ber_csv(path, [(x, q, e, spec.scenario, fp) for x, q, e in zip(xi, Q, err)])
    k = int(np.argmin(Q))
    return [path], {"xi_opt": int(xi[k]), "ber_min": float(Q[k])}


def _model_pmf(spec, pp, sp, w, i):
    if spec.scenario == "static":
        bits = comm.BitSequence(tuple(spec.options.get("bits", [1] * w)))
        psi = comm.static_interval_mean(sp, pp.channel, pp.geom, bits, w, pp.tx.phi)
        k = np.arange(comm.default_xi_max(psi) + 1)
        return comm.PmfVector(poisson.pmf(k, psi))
    tau_p = pp.tx.phi if spec.options.get("release_duration", "phi") == "phi" else None
    return comm.mobile_pmf_single(sp, pp.channel, pp.mobile, pp.tx, w, i, seed=spec.seed,
                                  n_chains=int(spec.options.get("n_chains", 100_000)),
                                  tau_p=tau_p)


def _run_pmf(spec, pp, out, tag):
    w = int(spec.options.get("w", 1))
    i = int(spec.options.get("i", 1))
    files, row = [], {}
    sp = release.solve_eigenvalues(pp.channel)
    model = None
    if spec.mode in ("analytic", "validate"):
        model = _model_pmf(spec, pp, sp, w, i)
        path = out / f"pmf_analytic_{tag}.csv"
        comm.write_pmf_csv(path, model)
        files.append(path)
        row["mean"] = model.mean()
    if spec.mode in ("simulate", "validate"):
        bits = [0] * w
        bits[i - 1] = 1
        if spec.scenario == "static" and "bits" in spec.options:
            bits = list(spec.options["bits"])
        sim = _realizations(spec, pp)
        scen = pp.geom if spec.scenario == "static" else pp.mobile
        res = simulator.run_bitstream_experiment(pp.channel, scen, sim, pp.tx, bits,
                                                 record_path=out / f"records_{tag}.jsonl")
        files.append(out / f"records_{tag}.jsonl")
        emp = res.count_pmf(w)
        path = out / f"pmf_empirical_{tag}.csv"
        comm.write_pmf_csv(path, comm.PmfVector(emp, n_samples=sim.realizations))
        files.append(path)
        row["empirical_mean"] = float(res.counts[:, w - 1].mean())
        if model is not None:
            n = max(emp.size, model.probs.size)
            e = np.zeros(n)
            m = np.zeros(n)
            e[:emp.size] = emp
            m[:model.probs.size] = model.probs
            row["r2_pmf"] = comm.r_squared(e, m)
            row["r2_cdf"] = comm.r_squared(np.cumsum(e), np.cumsum(m))
    return files, row


def _run_asymptote(spec, pp, out, tag):
    value = static.e2e_asymptotic_fraction(pp.channel, pp.geom)
    path = out / f"asymptote_{tag}.csv"
    _write_table(path, ["l", "fraction"], [[pp.geom.l, repr(value)]])
    return [path], {"asymptote": value}


RUNNERS = {"eigen": _run_eigen, "release": _run_release, "cir": _run_cir, "ber": _run_ber,
           "pmf": _run_pmf, "asymptote": _run_asymptote}


def _versions() -> dict:
    import numba
    import scipy
    from importlib import metadata
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "package": pkg}


def run(spec: ExperimentSpec) -> RunResult:
    """Execute ``spec``: CSV outputs, a summary table and a key=value manifest.

    Every sweep point is validated before anything runs, so an infeasible
    sweep fails up front.
    """
    spec.check()
    points = spec.points()
    try:
        params = [build_params(spec, p) for p in points]
    except ParameterError as exc:
        raise SpecError(f"infeasible sweep: {exc}") from exc
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files: list[Path] = []
    rows = []
    for point, pp in zip(points, params):
        new, row = RUNNERS[spec.target](spec, pp, out, _tag(point))
        files.extend(new)
        rows.append({**point, **row})
    wall = time.perf_counter() - start
    if any(len(r) > 0 for r in rows):
        keys: list[str] = []
        for r in rows:
            keys.extend(k for k in r if k not in keys)
        path = out / "summary.csv"
        _write_table(path, keys, [[r.get(k, "") for k in keys] for r in rows])
        files.append(path)
    manifest = out / "manifest.txt"
    lines = {"preset": spec.preset or "", "scenario": spec.scenario, "mode": spec.mode,
             "target": spec.target, "seed": spec.seed, "workers": simulator.worker_count(),
             "wall_time_s": f"{wall:.3f}"}
    for name, obj in _base_objects(spec).items():
        for f in dataclasses.fields(obj):
            if f.init:
                lines[f"{name}.{f.name}"] = getattr(obj, f.name)
    for axis in spec.sweeps:
        names, values = _axis(axis)
        lines[f"sweep.{','.join(names)}"] = ";".join(str(v) for v in values)
    for k, v in spec.options.items():
        lines[f"option.{k}"] = v
    for k, v in _versions().items():
        lines[f"version.{k}"] = v
    lines["files"] = ";".join(p.name for p in files)
    manifest.write_text("".join(f"{k}={v}\n" for k, v in lines.items()))
    return RunResult(files, manifest, rows, wall)


def read_manifest(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out
