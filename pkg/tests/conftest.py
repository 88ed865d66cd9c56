import json

import pytest


@pytest.fixture
def write_lines(tmp_path):
    """Write a list of JSON objects (or raw strings) one per line."""

    def _write(name, lines):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write((line if isinstance(line, str) else json.dumps(line, ensure_ascii=False)) + "\n")
        return path

    return _write


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def _record(number: int, ok: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail

    return _record


def skip_criterion(number: int, reason: str) -> None:
    ACCEPTANCE_LINES.append(f"[SKIP] criterion {number}: {reason}")
    pytest.skip(reason)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
