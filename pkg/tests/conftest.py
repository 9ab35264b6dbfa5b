import pytest

from pipeburst.hydraulics import steady_state
from pipeburst.moc import PipeConstants
from pipeburst.runner import simulate
from pipeburst.scenario import preset


@pytest.fixture(scope="session")
def case_a():
    return preset("paper-case-a")


@pytest.fixture(scope="session")
def net_a(case_a):
    return case_a.network


@pytest.fixture(scope="session")
def dt_a(case_a):
    return case_a.time_grid().dt


@pytest.fixture(scope="session")
def steady_a(net_a):
    return steady_state(net_a)


@pytest.fixture(scope="session")
def consts_a(net_a, dt_a):
    return PipeConstants(net_a, dt_a)


@pytest.fixture(scope="session")
def det_run(case_a):
    return simulate(case_a.with_overrides(mode="deterministic"))


@pytest.fixture(scope="session")
def quiet_run(case_a):
    return simulate(case_a.with_overrides(mode="none"))
