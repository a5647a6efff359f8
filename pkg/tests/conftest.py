import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one acceptance line, then asserts it."""

    def record(n: int, ok: bool, detail: str) -> None:
        _CRITERIA[n] = (ok, detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
