import numpy as np
import pytest

from shelab.fields import GridFunction, TorusGrid


@pytest.fixture
def grid64():
    return TorusGrid(64)


@pytest.fixture
def grid256():
    return TorusGrid(256)


def const(grid, c=1.0):
    return GridFunction(grid, np.full(grid.n_points, float(c)))


# one line per acceptance criterion, echoed again at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
