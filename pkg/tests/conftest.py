import os
from pathlib import Path

import pytest

_criteria: list[str] = []


@pytest.fixture
def usair_path():
    """Path to the USAir edge list if the user supplied one."""
    p = os.environ.get("QOSKETCH_USAIR")
    return Path(p) if p and Path(p).exists() else None


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _criteria.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
