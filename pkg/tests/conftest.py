import pytest

from vmbc import _pycore
from vmbc._backend import core

ACCEPTANCE_LINES = []

BACKENDS = [pytest.param(_pycore, id="python")]
if core is not _pycore:
    BACKENDS.insert(0, pytest.param(core, id="compiled"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
