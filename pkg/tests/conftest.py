import pytest

_ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion; printed in the terminal summary."""
    def record(number, passed, detail):
        _ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_ACCEPTANCE[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
