import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.criteria = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, passed, detail)."""
    def record(number, passed, detail):
        request.config.criteria[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not config.criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(config.criteria):
        passed, detail = config.criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
