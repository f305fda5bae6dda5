"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end of the run."""

import pytest

_LINES = []


class _Recorder:
    def __call__(self, number, title, ok, detail=""):
        _LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
        print(_LINES[-1])
        return ok


@pytest.fixture(scope="session")
def criterion():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
