import pytest

from fpcap import _backend, model as M
from fpcap.pipeline import prepare

BACKENDS = _backend.available()


@pytest.fixture(scope="session")
def dw1():
    return M.double_well_1d()


@pytest.fixture(scope="session")
def setup1d(dw1):
    return prepare(dw1)


@pytest.fixture(scope="session")
def setup2d_rev():
    return prepare(M.double_well_2d(0.0))


@pytest.fixture(scope="session")
def setup2d_rot():
    return prepare(M.double_well_2d(1.0))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param



ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(pytestconfig):
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""
    lines = pytestconfig.stash.setdefault(ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
