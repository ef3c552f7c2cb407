"""Collects acceptance outcomes and prints one line per criterion at the end."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[str, tuple[bool, str]] = {}
_STARTED: set[str] = set()


class AcceptanceLog:
    def record(self, criterion: str, passed: bool, detail: str) -> bool:
        _RESULTS[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")
        return bool(passed)


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceLog:
    return AcceptanceLog()


def pytest_runtest_logstart(nodeid, location):
    name = nodeid.rsplit("::", 1)[-1]
    if name.startswith("test_criterion_"):
        _STARTED.add(name.split("_")[2])


def pytest_terminal_summary(terminalreporter):
    if not _STARTED:
        return
    from test_acceptance import CRITERIA

    tr = terminalreporter
    tr.section("acceptance criteria")
    for key, title in CRITERIA:
        if key in _RESULTS:
            ok, detail = _RESULTS[key]
            tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {key:>3} {title}: {detail}")
        elif key in _STARTED:
            tr.write_line(f"[FAIL] {key:>3} {title}: not completed (error or not run)")
