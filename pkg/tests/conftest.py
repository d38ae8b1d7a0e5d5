import pytest

_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    """Append one acceptance line: report(id, passed, detail)."""
    def report(cid, passed, detail):
        line = f"criterion {cid:>3}: {'PASS' if passed else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
