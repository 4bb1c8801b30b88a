import math

import numpy as np
import pytest

from mftx import BitTxParams, ChannelParams, MobileParams, SimParams, release_pdf
from mftx.comm import r_squared
from mftx.mobile import expected_e2e_fraction_curve
from mftx.sim import kernels
from mftx.sim.simulator import (RealizationRecord, read_records, run_bitstream_experiment,
                                run_impulse_experiment, simulate_fusion_times,
                                simulate_uniform_release)
from mftx.sim.steps import (ABSORBED, DEGRADED, DIFFUSING, MoleculeState, StepContext,
                            new_vesicle, step_molecule, step_vesicle)
from mftx.static import uniform_hitting_cdf

SMALL = ChannelParams(N_v=20, eta=5)
SHORT = SimParams(realizations=4, t_end=3.0, seed=11)


def test_vesicle_displacement_variance():
    p = ChannelParams(r_T=1e9)  # membrane out of reach
    sim = SimParams()
    rng = np.random.default_rng(0)
    state = new_vesicle()
    steps = np.empty((100_000, 3))
    for k in range(len(steps)):
        nxt, ev = step_vesicle(state, p, sim, rng)
        assert ev is None
        steps[k] = nxt.position - state.position
        state = nxt
    var = steps.var(axis=0)
    np.testing.assert_allclose(var, 2 * p.D_v * sim.dt, rtol=0.02)


def test_vesicle_without_fusion_stays_inside():
    p = ChannelParams(k_f=0.0, r_T=0.5)
    rng = np.random.default_rng(1)
    state = new_vesicle()
    for _ in range(10_000):
        state, ev = step_vesicle(state, p, SimParams(), rng)
        assert ev is None and state.alive
        assert np.linalg.norm(state.position) <= p.r_T


def test_vesicle_fusion_event_on_membrane():
    p = ChannelParams(r_T=0.3)
    rng = np.random.default_rng(2)
    state = new_vesicle()
    while state.alive:
        state, ev = step_vesicle(state, p, SimParams(), rng)
    assert abs(np.linalg.norm(ev.point) - p.r_T) < 1e-9
    assert 0.0 <= ev.dt_f <= 1e-3
    t_f, point = state.fused_at
    assert t_f == state.time
    with pytest.raises(ValueError):
        step_vesicle(state, p, SimParams(), rng)


def test_molecule_displacement_variance():
    p = ChannelParams(k_d=0.0)
    ctx = StepContext(rx_center=np.array([1e9, 0.0, 0.0]), tx_center=np.zeros(3))
    rng = np.random.default_rng(3)
    state = MoleculeState(np.zeros(3), 0.0, 0.0)
    steps = np.empty((100_000, 3))
    for k in range(len(steps)):
        nxt = step_molecule(state, p, SimParams(), ctx, rng)
        assert nxt.status == DIFFUSING  # no degradation at k_d = 0
        steps[k] = nxt.position - state.position
        state = nxt
    np.testing.assert_allclose(steps.var(axis=0), 2 * p.D_sigma * 1e-3, rtol=0.02)


def test_molecule_absorbed_and_degraded():
    p = ChannelParams()
    rng = np.random.default_rng(4)
    ctx = StepContext(rx_center=np.zeros(3), tx_center=np.array([40.0, 0, 0]))
    inside = MoleculeState(np.array([5.0, 0, 0]), 0.0, 0.3)
    out = step_molecule(inside, p, SimParams(), ctx, rng)
    assert out.status == ABSORBED and out.event_time == 0.3
    doomed = step_molecule(MoleculeState(np.array([30.0, 0, 0]), 0.0, 0.0),
                           p.replace(k_d=1e9), SimParams(), ctx, rng)
    assert doomed.status == DEGRADED
    with pytest.raises(ValueError):
        step_molecule(out, p, SimParams(), ctx, rng)


def test_reflecting_membrane_keeps_molecules_out():
    p = ChannelParams(k_d=0.0)
    sim = SimParams(membrane_mode="reflecting")
    ctx = StepContext(rx_center=np.array([1e9, 0, 0]), tx_center=np.zeros(3))
    rng = np.random.default_rng(5)
    state = MoleculeState(np.array([10.0 + 1e-9, 0, 0]), 0.0, 0.0)
    for _ in range(5000):
        state = step_molecule(state, p, sim, ctx, rng)
        assert np.linalg.norm(state.position) >= p.r_T


def test_survival_fraction():
    p = ChannelParams(k_d=0.8)
    _, status = simulate_uniform_release(p, 1e6, SimParams(t_end=1.0), 100_000)
    alive = np.count_nonzero(status == kernels.ALIVE) / len(status)
    assert alive == pytest.approx(math.exp(-0.8), rel=0.01)


def test_fusion_times_follow_release_pdf(spectrum):
    p = ChannelParams()
    ft = simulate_fusion_times(p, SimParams(t_end=20.0, seed=3), 10_000)
    edges = np.arange(0.0, 20.0 + 1e-9, 0.05)
    hist = np.histogram(ft[np.isfinite(ft)], bins=edges)[0] / (len(ft) * 0.05)
    mid = 0.5 * (edges[1:] + edges[:-1])
    assert r_squared(hist, release_pdf(spectrum, mid)) >= 0.97


def test_no_fusion_without_k_f():
    ft = simulate_fusion_times(ChannelParams(k_f=0.0), SimParams(t_end=10.0), 10)
    assert np.all(np.isnan(ft))
    res = run_impulse_experiment(ChannelParams(k_f=0.0, N_v=10), 40.0, SHORT)
    assert all(len(r.absorption_times) == 0 for r in res.records)
    assert res.cdf.values[-1] == 0.0


def test_uniform_release_matches_closed_form(params):
    times, status = simulate_uniform_release(params, 40.0, SimParams(t_end=10.0, seed=9), 10_000)
    grid = np.linspace(0.05, 10.0, 200)
    hit = np.sort(times[status == kernels.ABSORBED])
    emp = np.searchsorted(hit, grid, side="right") / len(times)
    assert r_squared(emp, uniform_hitting_cdf(params, 40.0, grid)) >= 0.99


def test_impulse_determinism_and_records(tmp_path):
    path = tmp_path / "records.jsonl"
    a = run_impulse_experiment(SMALL, 40.0, SHORT, record_path=path)
    b = run_impulse_experiment(SMALL, 40.0, SHORT)
    assert all(x.same_as(y) for x, y in zip(a.records, b.records))
    back = read_records(path)
    assert all(x.same_as(y) for x, y in zip(a.records, back))
    np.testing.assert_array_equal(a.pdf.values, b.pdf.values)
    c = run_impulse_experiment(SMALL, 40.0, SHORT.replace(seed=12))
    assert not all(x.same_as(y) for x, y in zip(a.records, c.records))


def test_worker_count_does_not_change_results():
    a = run_impulse_experiment(SMALL, 40.0, SHORT, workers=1)
    b = run_impulse_experiment(SMALL, 40.0, SHORT, workers=2)
    assert all(x.same_as(y) for x, y in zip(a.records, b.records))


def test_conservation_and_fusion_points():
    res = run_impulse_experiment(SMALL, 40.0, SHORT)
    for rec in res.records:
        assert rec.conserved()
        fused = np.isfinite(rec.fusion_times)
        radii = np.linalg.norm(rec.fusion_points[fused], axis=1)
        np.testing.assert_allclose(radii, SMALL.r_T, atol=1e-9)
        assert np.all(rec.absorption_times >= 0)


def test_record_json_keeps_unfused_slots():
    rec = RealizationRecord(0, 1, np.array([np.nan, 0.5]), np.array([[np.nan] * 3, [10.0, 0, 0]]),
                            np.array([1.0, 2.0]), np.array([2]), 3, 0, 5)
    back = RealizationRecord.from_json(rec.to_json())
    assert back.same_as(rec) and back.n_fused == 1 and back.conserved()


def test_bitstream_counts():
    tx = BitTxParams(phi=1.0)
    zeros = run_bitstream_experiment(SMALL, 40.0, SHORT, tx, [0, 0, 0])
    assert zeros.counts.shape == (4, 3) and not zeros.counts.any()
    ones = run_bitstream_experiment(SMALL, 40.0, SHORT, tx, [1, 0, 1])
    assert ones.counts.sum() > 0
    cdf = ones.count_cdf(1)
    assert cdf[-1] == 1.0 and np.all(np.diff(cdf) >= 0)
    with pytest.raises(ValueError):
        run_bitstream_experiment(SMALL, 40.0, SHORT, tx, [0, 2])


def test_mobile_reflecting_rejected():
    mobile = MobileParams.for_channel(SMALL)
    with pytest.raises(ValueError, match="reflecting"):
        run_impulse_experiment(SMALL, mobile, SHORT.replace(membrane_mode="reflecting"))


def test_reflecting_static_runs():
    res = run_impulse_experiment(SMALL, 40.0, SHORT.replace(membrane_mode="reflecting"))
    assert all(r.conserved() for r in res.records)


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::mftx.mobile.OverlapWarning")
def test_mobile_impulse_matches_expectation(params, spectrum):
    mobile = MobileParams.for_channel(params)
    res = run_impulse_experiment(params, mobile, SimParams(realizations=1000, t_end=10.0, seed=5))
    curve = expected_e2e_fraction_curve(spectrum, params, mobile, 10.0, n=201)
    assert r_squared(res.fraction_at(curve.times), curve.values) >= 0.97
