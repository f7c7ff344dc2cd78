from __future__ import annotations

import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.fixture
def record_criterion():
    """Record one acceptance line; call before asserting so failures still report."""

    def record(n: int, status: bool | str, detail: str):
        label = status if isinstance(status, str) else ("PASS" if status else "FAIL")
        _CRITERIA[n] = (label, detail)
        print(f"CRITERION {n}: {label} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        label, detail = _CRITERIA[n]
        terminalreporter.write_line(f"CRITERION {n}: {label} - {detail}")
