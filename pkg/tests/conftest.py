import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Record a one-line verdict that is echoed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(
            f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        )

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
