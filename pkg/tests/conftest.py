import math

import pytest

from jointca import Carrier, Scenario, Settings, User, UtilityFunction
from jointca.engine import TABLE1_UTILITIES


def make_scenario(caps, users, **settings):
    """caps: capacities for carriers 1..K; users: (utility, coverage) pairs for UEs 1..M."""
    carriers = tuple(Carrier(k + 1, float(c)) for k, c in enumerate(caps))
    people = tuple(User(i + 1, u, tuple(cov)) for i, (u, cov) in enumerate(users))
    return Scenario(carriers, people, Settings(**settings)).validate()


@pytest.fixture(params=["numba", "python"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "python":
        monkeypatch.setenv("JOINTCA_DISABLE_NUMBA", "1")
    else:
        monkeypatch.delenv("JOINTCA_DISABLE_NUMBA", raising=False)
    return request.param


@pytest.fixture
def table1_utilities():
    return TABLE1_UTILITIES


SIG_5_10 = UtilityFunction.sigmoidal(5, 10)
LOG_3 = UtilityFunction.logarithmic(3, 100)
LOG_SLOPE_AT_1 = 3 / (4 * math.log(4))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
