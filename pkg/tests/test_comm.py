import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from mftx import BitTxParams, MobileParams, release_cdf
from mftx.comm import (BitSequence, PmfVector, build_release_intervals, detect, fingerprint,
                       mobile_avg_ber, mobile_conditional_mean, mobile_pmf_single,
                       mobile_pmf_total, poisson_cdf, r_squared, static_avg_ber,
                       static_interval_mean, write_ber_csv, write_pmf_csv)
from mftx.static import e2e_hitting_cdf

from conftest import spectrum_for

pytestmark = pytest.mark.filterwarnings("ignore::mftx.mobile.OverlapWarning")


def test_poisson_cdf_examples():
    assert poisson_cdf(0.0, 1) == 1.0
    assert poisson_cdf(5.0, 1) == pytest.approx(6.7379e-3, rel=1e-4)
    assert poisson_cdf(5.0, 0) == 0.0
    v = [poisson_cdf(psi, 3) for psi in (1.0, 2.0, 4.0)]
    assert v[0] > v[1] > v[2]
    with pytest.raises(ValueError):
        poisson_cdf(-1.0, 2)


@settings(max_examples=60, deadline=None)
@given(psi=st.floats(0.0, 1e4), xi=st.integers(0, 12000))
def test_poisson_cdf_matches_scipy(psi, xi):
    ref = poisson.cdf(xi - 1, psi) if xi >= 1 else 0.0
    assert poisson_cdf(psi, xi) == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_detect():
    assert detect(5, 5) == 1
    assert detect(0, 1) == 0
    assert detect(7, 5) == 1
    with pytest.raises(ValueError):
        detect(-1, 1)


def test_r_squared():
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_squared([1, 2, 3], [2, 2, 2]) == 0.0
    assert r_squared([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5)
    with pytest.raises(ValueError, match="zero variance"):
        r_squared([1, 1], [1, 2])


def test_pmf_total():
    p = PmfVector(poisson.pmf(np.arange(40), 1.0))
    np.testing.assert_array_equal(mobile_pmf_total([p]).probs, p.probs)
    a, b = np.zeros(10), np.zeros(10)
    a[2], b[3] = 1.0, 1.0
    out = mobile_pmf_total([PmfVector(a), PmfVector(b)])
    assert out.probs[5] == 1.0 and out.truncation_mass == pytest.approx(0.0)
    empty = mobile_pmf_total([], xi_max=4)
    assert empty.probs[0] == 1.0


def test_pmf_total_poisson_additivity():
    k = np.arange(60)
    out = mobile_pmf_total([PmfVector(poisson.pmf(k, 1.0)), PmfVector(poisson.pmf(k, 2.0))])
    np.testing.assert_allclose(out.probs, poisson.pmf(k, 3.0), atol=1e-9)
    assert out.probs.sum() + out.truncation_mass == pytest.approx(1.0, abs=1e-9)


def test_pmf_vector_checks():
    with pytest.raises(ValueError):
        PmfVector(np.array([0.7, 0.6]))
    with pytest.raises(ValueError):
        PmfVector(np.array([-0.1, 0.5]))
    p = PmfVector(np.array([0.25, 0.5]))
    assert p.truncation_mass == pytest.approx(0.25)
    np.testing.assert_allclose(p.cdf_below([0, 1, 2, 9]), [0, 0.25, 0.75, 0.75])


def test_bit_sequence():
    with pytest.raises(ValueError):
        BitSequence((0, 2))
    b = BitSequence.random(8, 0.5, np.random.default_rng(0))
    assert b.W == 8 and set(b.bits) <= {0, 1}


def test_static_interval_mean(params, spectrum):
    assert static_interval_mean(spectrum, params, 40.0, BitSequence((0, 0, 0)), 3, 2.0) == 0.0
    one = static_interval_mean(spectrum, params, 40.0, BitSequence((1,)), 1, 2.0)
    assert one == pytest.approx(1000 * e2e_hitting_cdf(spectrum, params, 40.0, 2.0), rel=1e-12)
    longer = static_interval_mean(spectrum, params, 40.0, BitSequence((1,)), 1, 4.0)
    assert longer > one


def test_static_ber_limits(params, spectrum):
    tx = BitTxParams(W=4, P1=0.5)
    zeros = np.zeros(tx.W + 1)
    assert static_avg_ber(spectrum, params, 40.0, tx, xi=1, table=zeros) == pytest.approx(tx.P1)
    perfect = np.array([0.0, 1.0, 1.0, 1.0, 1.0])
    assert static_avg_ber(spectrum, params, 40.0, tx, xi=1, table=perfect) < 1e-12
    table = np.asarray(e2e_hitting_cdf(spectrum, params, 40.0, 2.0 * np.arange(5)))
    assert static_avg_ber(spectrum, params, 40.0, tx, xi=0, table=table) == pytest.approx(tx.P0)
    assert static_avg_ber(spectrum, params, 40.0, tx, xi=10**6,
                          table=table) == pytest.approx(tx.P1)


def _brute_force_ber(table, total, tx, xi):
    """Average over every full bit sequence instead of per-bit histories."""
    inc = np.diff(table)
    Q = 0.0
    for bits in itertools.product((0, 1), repeat=tx.W):
        prob = np.prod([tx.P1 if b else tx.P0 for b in bits])
        for w in range(1, tx.W + 1):
            psi = total * sum(inc[w - i] for i in range(1, w + 1) if bits[i - 1])
            p_one = 1.0 - poisson_cdf(psi, xi)
            Q += prob * (1.0 - p_one if bits[w - 1] else p_one)
    return Q / tx.W


@pytest.mark.parametrize("P1", [0.5, 0.3])
def test_static_ber_enumeration_matches_brute_force(params, spectrum, P1):
    tx = BitTxParams(W=4, P1=P1)
    table = np.asarray(e2e_hitting_cdf(spectrum, params, 40.0, 2.0 * np.arange(5)))
    for xi in (5, 20, 40):
        got = static_avg_ber(spectrum, params, 40.0, tx, xi=xi, table=table)
        if P1 == 0.5:
            # the per-bit history average is exact for equiprobable bits
            assert got == pytest.approx(_brute_force_ber(table, 1000, tx, xi), rel=1e-10)
        else:
            assert 0.0 <= got <= 1.0


def test_static_ber_u_shape(params):
    p = params.replace(D_v=50.0)
    Q = static_avg_ber(spectrum_for(50.0, 30.0), p, 40.0, BitTxParams(), xi=np.arange(1, 101))
    k = int(np.argmin(Q))
    assert 0 < k < len(Q) - 1
    assert Q[0] > Q[k] and Q[-1] > Q[k]


def test_release_interval_branches(params):
    s50 = spectrum_for(50.0, 30.0)
    tx = BitTxParams(phi=4.0, C=3)
    iv = build_release_intervals(s50, params.replace(D_v=50.0), tx, 1, 1, 2.0)
    tau_p = iv.T_e_i - iv.T_i
    assert tau_p < tx.phi  # the full release window fits
    assert iv.T_i == 2.0
    s9 = spectrum_for(9.0, 30.0)
    iv = build_release_intervals(s9, params, BitTxParams(phi=2.0), 1, 2, 2.0)
    assert iv.T_e_i == pytest.approx(2.0 + 2 * 2.0)  # cut at the end of interval w
    total = iv.counts.sum()
    assert total == pytest.approx(1000 * release_cdf(s9, iv.T_e_i - iv.T_i), rel=1e-9)
    assert np.all(np.diff(iv.midpoints) > 0)
    with pytest.raises(ValueError):
        build_release_intervals(s9, params, BitTxParams(), 3, 2, 2.0)


def test_conditional_mean(params, spectrum):
    mobile = MobileParams.for_channel(params)
    tx = BitTxParams()
    iv = build_release_intervals(spectrum, params, tx, 1, 1, mobile.t_prime)
    near = mobile_conditional_mean(iv, [40.0, 40.0, 40.0], params, mobile, 1, tx)
    far = mobile_conditional_mean(iv, [45.0, 45.0, 45.0], params, mobile, 1, tx)
    assert near > far > 0
    assert mobile_conditional_mean(iv, [40.0] * 3, params, mobile, 1, tx, b_i=0) == 0.0
    with pytest.raises(ValueError):
        mobile_conditional_mean(iv, [40.0, 5.0, 40.0], params, mobile, 1, tx)
    batch = mobile_conditional_mean(iv, np.full((4, 3), 40.0), params, mobile, 1, tx)
    np.testing.assert_allclose(batch, near)


def test_conditional_mean_single_interval(params, spectrum):
    # C = 1 is one impulse of all released molecules at the window midpoint
    mobile = MobileParams.for_channel(params)
    tx = BitTxParams(C=1)
    iv = build_release_intervals(spectrum, params, tx, 1, 1, mobile.t_prime)
    assert iv.midpoints[0] == pytest.approx(0.5 * (iv.T_i + iv.T_e_i))
    from mftx.static import uniform_hitting_cdf
    T_w1 = mobile.t_prime + tx.phi
    expect = iv.counts[0] * uniform_hitting_cdf(params, 40.0, T_w1 - iv.midpoints[0],
                                                D_sigma=mobile.D2)
    got = mobile_conditional_mean(iv, [40.0], params, mobile, 1, tx)
    assert got == pytest.approx(expect, rel=1e-12)


def test_pmf_collapses_without_mobility(params, spectrum):
    mobile = MobileParams.for_channel(params, D_T=1e-6, D_R=1e-6)
    tx = BitTxParams(C=1)
    pmf = mobile_pmf_single(spectrum, params, mobile, tx, 1, 1, n_chains=2000)
    iv = build_release_intervals(spectrum, params, tx, 1, 1, mobile.t_prime)
    psi = mobile_conditional_mean(iv, [mobile.l0], params, mobile, 1, tx)
    ref = poisson.pmf(np.arange(pmf.xi_max + 1), psi)
    assert 0.5 * np.abs(pmf.probs - ref).sum() < 1e-3


def test_pmf_overdispersed_and_reproducible(params):
    p = params.replace(D_v=50.0)
    s = spectrum_for(50.0, 30.0)
    mobile = MobileParams.for_channel(p)
    tx = BitTxParams(C=3)
    a = mobile_pmf_single(s, p, mobile, tx, 1, 1, n_chains=20_000, seed=7)
    b = mobile_pmf_single(s, p, mobile, tx, 1, 1, n_chains=20_000, seed=7)
    np.testing.assert_array_equal(a.probs, b.probs)
    assert a.variance() / a.mean() > 1.0
    assert a.probs.sum() + a.truncation_mass == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.isfinite(a.stderr))


def _deterministic_mobile_ber(spectrum, params, mobile, tx, xi):
    """BER with every distance frozen at l0: plain Poisson enumeration."""
    psi = {}
    for w in range(1, tx.W + 1):
        for i in range(1, w + 1):
            iv = build_release_intervals(spectrum, params, tx, i, w, mobile.t_prime)
            psi[(w, i)] = mobile_conditional_mean(iv, [mobile.l0] * tx.C, params, mobile, w, tx)
    Q = 0.0
    for w in range(1, tx.W + 1):
        acc = 0.0
        for hist in itertools.product((0, 1), repeat=w - 1):
            isi = sum(psi[(w, i)] for i, b in enumerate(hist, start=1) if b)
            acc += (tx.P1 * poisson_cdf(isi + psi[(w, w)], xi)
                    + tx.P0 * (1.0 - poisson_cdf(isi, xi)))
        Q += acc / 2 ** (w - 1)
    return Q / tx.W


def test_mobile_ber_without_mobility(params, spectrum):
    mobile = MobileParams.for_channel(params, D_T=1e-6, D_R=1e-6)
    tx = BitTxParams(W=3, C=3)
    xi = np.arange(1, 81)
    est = mobile_avg_ber(spectrum, params, mobile, tx, xi=xi, n_chains=2000, n_batches=4)
    ref = [_deterministic_mobile_ber(spectrum, params, mobile, tx, x) for x in xi[::10]]
    # residual mobility moves the distance by ~3 nm, hence the tolerance
    np.testing.assert_allclose(est.Q[::10], ref, atol=1e-5)
    # the continuous-release static link with D2 has nearly the same optimum; away from
    # it the three-impulse release discretisation shows
    p2 = params.replace(D_sigma=mobile.D2)
    q_static = static_avg_ber(spectrum, p2, mobile.l0, tx, xi=xi)
    assert abs(est.Q.min() - q_static.min()) < 0.01


def test_csv_writers(tmp_path):
    path = tmp_path / "ber.csv"
    write_ber_csv(path, [(1, 0.5, 0.0, "static", "abc")])
    assert path.read_text().splitlines()[0] == "xi,Q,stderr,scenario,fingerprint"
    write_pmf_csv(tmp_path / "pmf.csv", PmfVector(np.array([0.5, 0.5])))
    assert len((tmp_path / "pmf.csv").read_text().splitlines()) == 3
    assert fingerprint(BitTxParams()) == fingerprint(BitTxParams())
    assert fingerprint(BitTxParams()) != fingerprint(BitTxParams(phi=3.0))
    assert math.isfinite(len(fingerprint(1, "a")))
