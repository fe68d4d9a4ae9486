import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pyric.data import GridDefinition, generate_synthetic  # noqa: E402


@pytest.fixture(scope="session")
def small_data():
    """6x6 cells, two years from 2010-01-01."""
    return generate_synthetic(GridDefinition.regular(6, 6), 730, seed=3)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
