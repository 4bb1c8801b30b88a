import warnings
from functools import lru_cache

import pytest

from mftx import ChannelParams, solve_eigenvalues
from mftx.params import MFStepWarning


@lru_cache(maxsize=None)
def spectrum_for(D_v: float = 9.0, k_f: float = 30.0, r_T: float = 10.0, n_max: int = 10000):
    return solve_eigenvalues(ChannelParams(r_T=r_T, D_v=D_v, k_f=k_f), n_max=n_max)


@pytest.fixture(scope="session")
def params():
    return ChannelParams()


@pytest.fixture(scope="session")
def spectrum():
    return spectrum_for()


@pytest.fixture(autouse=True)
def _quiet_mf_step():
    # the default parameter set (dt = 1 ms) trips this on purpose
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MFStepWarning)
        yield


# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
