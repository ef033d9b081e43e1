import pytest

_LINES = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; printed in the terminal summary."""
    def record(number, name, passed, detail=""):
        _LINES.append(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
