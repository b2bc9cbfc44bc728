"""Collects acceptance verdicts and prints them after the run."""

import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(criterion: str, status: str, detail: str) -> None:
        VERDICTS.append(f"{status:6} {criterion}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
