import json
from pathlib import Path

import numpy as np
import pytest

from hawkesnet.simulator import EventData

FIXTURES = Path(__file__).with_name("fixtures")

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES: dict = {}


@pytest.fixture(scope="session")
def derived():
    return json.loads((FIXTURES / "derived.json").read_text())


@pytest.fixture
def tiny_events():
    rng = np.random.default_rng(7)
    times = [np.sort(rng.uniform(0.0, 2.0, n)) for n in (9, 6, 4)]
    return EventData(3, 2.0, times)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
