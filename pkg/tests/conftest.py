import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one pass/fail line per acceptance criterion; echoed after the run."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
