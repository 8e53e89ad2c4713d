import numpy as np
import pytest

from darwin_kinetics.darwin import start_lvp, step_lvp
from darwin_kinetics.ensemble import InitialProfile, sample_initial
from darwin_kinetics.kernels import SofteningSpec
from darwin_kinetics.vp import start_vp

DELTA = 0.2


@pytest.fixture(scope="session")
def profile():
    return InitialProfile(center_v=(0.3, 0.0, 0.0), radius_v=0.5, amplitude=20.0)


@pytest.fixture(scope="session")
def ensemble(profile):
    return sample_initial(profile, 3, SofteningSpec(DELTA))


@pytest.fixture(scope="session")
def lvp_initial(profile, ensemble):
    return start_lvp(start_vp(ensemble.copy()), profile, 3)


@pytest.fixture(scope="session")
def lvp_evolved(profile, ensemble):
    st = start_lvp(start_vp(ensemble.copy()), profile, 3)
    for _ in range(10):
        st = step_lvp(st, 0.05)
    return st


@pytest.fixture(scope="session")
def probes():
    return np.array([[0.2, 0.1, -0.3], [0.5, 0.5, 0.0], [-0.4, 0.2, 0.6], [2.0, 0.0, 0.0]])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
