import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; all lines are echoed in the summary."""

    def emit(number, ok, detail):
        verdict = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"criterion {number}: {verdict} - {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
