import pytest
from hypothesis import HealthCheck, settings

from girsanovlab.spectral import ModelSpec

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

CRITERIA = {}


def record_criterion(number, title, passed, detail):
    line = f"CRITERION {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    CRITERIA[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])


@pytest.fixture(scope="session")
def ks():
    return ModelSpec.ks()


@pytest.fixture(scope="session")
def ks_small():
    return ModelSpec.ks(cutoff=8)


@pytest.fixture(scope="session")
def ns2():
    return ModelSpec.fracns(d=2)


@pytest.fixture(scope="session")
def ns3():
    return ModelSpec.fracns(d=3)


@pytest.fixture(scope="session")
def ns2_small():
    return ModelSpec.fracns(d=2, cutoff=4)
