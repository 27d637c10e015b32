import pytest

ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record the outcome line of an acceptance criterion."""
    def record(criterion, ok, detail):
        ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
