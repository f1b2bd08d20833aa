import pytest

_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``; ``passed=None`` means skipped."""

    def record(n, passed, detail=""):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {n:>2}: {status}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
