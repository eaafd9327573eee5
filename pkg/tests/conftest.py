"""Shared pytest plumbing.

The acceptance module records one PASS/FAIL line per criterion; the hook
below replays those lines in a dedicated section of the terminal summary so
they survive output capture.
"""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Mutable list of acceptance lines, echoed after the test run."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
