import pytest

ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def acceptance_report():
    """Record one verdict line per acceptance criterion; printed once at the end of the run."""

    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
