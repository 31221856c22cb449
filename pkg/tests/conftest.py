import numpy as np
import pytest

from predpca import dataio, synth


@pytest.fixture(scope="session")
def linear_system():
    gt = synth.gen_linear(5, 30, 0.9, 1.0, seed=0)
    traj = synth.simulate(gt, 20000, seed=1)
    return gt, traj


@pytest.fixture(scope="session")
def linear_series(linear_system):
    return dataio.center(dataio.TimeSeries(linear_system[1].observations))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for the acceptance summary."""

    def _report(tag, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        line = f"{tag}: {status} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
