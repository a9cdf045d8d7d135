import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from neuralfield.numerics import Rng


@pytest.fixture(autouse=True, scope="session")
def single_thread_blas():
    with threadpool_limits(limits=1):
        yield


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(0)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Records one verdict line per acceptance criterion and prints it immediately."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print("\n" + line, flush=True)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
