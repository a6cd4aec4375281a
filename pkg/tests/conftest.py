"""Collects the acceptance verdicts and prints them after the test session."""

import pytest

_VERDICTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS_KEY] = []


@pytest.fixture(scope="session")
def verdicts(pytestconfig):
    """Append ``(criterion, passed, detail)`` tuples; they are printed at the end."""
    return pytestconfig.stash[_VERDICTS_KEY]


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_VERDICTS_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")
