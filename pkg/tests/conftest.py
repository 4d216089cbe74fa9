import numpy as np
import pytest

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _ACCEPTANCE.get(report.nodeid)
        if prev != "FAIL":
            _ACCEPTANCE[report.nodeid] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, status in sorted(_ACCEPTANCE.items()):
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{status}  {name}")
