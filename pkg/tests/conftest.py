"""Shared fixtures: a registry of acceptance outcomes printed after the run."""
import pytest

ACCEPTANCE: dict = {}


def record(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[label] = (bool(ok), detail)


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{label} {'PASS' if ok else 'FAIL'}  {detail}")
