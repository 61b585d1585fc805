import math

import pytest

from sscc.model import SystemConfig


@pytest.fixture
def base_cfg():
    return SystemConfig(qp=1.0, pmax=10.0, n_relays=1)


@pytest.fixture
def unbounded_cfg():
    return SystemConfig(qp=1.0, pmax=math.inf, n_relays=1)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
