"""Shared fixtures plus an end-of-run summary for the acceptance suite."""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def record_criterion():
    def record(number, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number:02d} {name}: {status}"
        if detail:
            line += f"  ({detail})"
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
