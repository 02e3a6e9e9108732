import numpy as np
import pytest

from hompvar import _backend

BACKENDS = ["python"]
try:
    _backend.kernels("cython")
    BACKENDS.insert(0, "cython")
except ImportError:
    pass

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return _backend.kernels(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
