import pytest

CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)`` for the acceptance summary, then assert."""

    def record(number, passed, detail):
        CRITERIA.append((number, bool(passed), detail))
        assert passed, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
