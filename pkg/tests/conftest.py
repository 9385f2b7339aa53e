import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("curvlab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "curvlab"))

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one pass/fail line per acceptance criterion; printed at the end of the run."""
    def record(number, title, passed, detail=""):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
