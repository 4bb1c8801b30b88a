import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mftx import (BitTxParams, ChannelParams, MobileParams, ParameterError, SimParams,
                  StaticGeometry, load_config, save_config, validate)
from mftx.params import MFStepWarning, dumps_config, loads_config, mf_step_probability


def test_defaults_are_valid(params):
    validate(params)
    validate(StaticGeometry(40.0), params)
    validate(MobileParams.for_channel(params), params)
    validate(BitTxParams())


def test_overlapping_spheres_rejected(params):
    with pytest.raises(ParameterError, match="overlapping spheres"):
        validate(StaticGeometry(15.0), params)


def test_all_violations_reported_at_once():
    with pytest.raises(ParameterError) as info:
        validate(ChannelParams(r_T=-1.0, D_v=0.0, N_v=0))
    assert len(info.value.violations) == 3


def test_mf_step_probability_warning(params):
    p = mf_step_probability(30.0, 9.0, 1e-3)
    assert p == pytest.approx(30.0 * math.sqrt(math.pi * 1e-3 / 9.0))
    assert 0.55 < p < 0.57
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        validate(SimParams(dt=1e-3), params)
    assert any(issubclass(w.category, MFStepWarning) for w in caught)


def test_mf_step_probability_above_one_is_an_error(params):
    with pytest.raises(ParameterError, match="step probability"):
        validate(SimParams(dt=0.01), params)


def test_unknown_membrane_mode():
    with pytest.raises(ParameterError, match="membrane_mode"):
        validate(SimParams(membrane_mode="sticky"))


def test_derived_fields():
    p = ChannelParams(r_T=7.0).replace(r_T=3.0)
    assert p.rho == 1.0 / (4.0 * math.pi * 9.0)
    m = MobileParams(D_T=2.0, D_R=3.0, D_sigma=100.0).replace(D_R=5.0)
    assert (m.D1, m.D2) == (7.0, 105.0)


def test_mobile_sigma_must_match_channel(params):
    with pytest.raises(ParameterError, match="D_sigma"):
        validate(MobileParams(D_sigma=500.0), params)


pos = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(r_T=pos, D_v=pos, k_f=st.floats(0, 1e3), N_v=st.integers(1, 10000), dt=pos,
       seed=st.integers(0, 2**31), l0=pos, phi=pos)
def test_config_round_trip(r_T, D_v, k_f, N_v, dt, seed, l0, phi):
    objs = (ChannelParams(r_T=r_T, D_v=D_v, k_f=k_f, N_v=N_v), MobileParams(l0=l0),
            BitTxParams(phi=phi), SimParams(dt=dt, seed=seed, membrane_mode="reflecting"))
    back = loads_config(dumps_config(*objs))
    assert tuple(back[type(o).__name__] for o in objs) == objs


def test_config_file_round_trip(tmp_path, params):
    path = tmp_path / "run.ini"
    save_config(path, params, StaticGeometry(30.0))
    back = load_config(path)
    assert back["ChannelParams"] == params
    assert back["StaticGeometry"].l == 30.0


def test_config_errors_carry_line_numbers():
    text = "[ChannelParams]\nr_T = 10\nbogus = 3\n\n[Nope]\nx = 1\n"
    with pytest.raises(ParameterError) as info:
        loads_config(text, source="cfg")
    msgs = info.value.violations
    assert any(m.startswith("cfg:3:") and "bogus" in m for m in msgs)
    assert any(m.startswith("cfg:5:") and "Nope" in m for m in msgs)


def test_config_bad_value():
    with pytest.raises(ParameterError, match="cfg:2: bad value"):
        loads_config("[ChannelParams]\nN_v = lots\n", source="cfg")
