"""Shared pytest wiring for the acceptance scoreboard.

Acceptance tests record one line per guarantee through the ``scoreboard``
fixture; the lines are printed in their own terminal section after the run,
outside pytest's output capture.
"""
import pytest

_lines: list[str] = []


@pytest.fixture
def scoreboard():
    def record(name: str, ok: bool) -> None:
        _lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in _lines:
            terminalreporter.write_line(line)
