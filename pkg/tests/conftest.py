import pytest

_REPORT = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one summary line per acceptance criterion."""

    def record(criterion, passed, detail):
        _REPORT.append((criterion, passed, detail))
        print(f"[{criterion}] {'PASS' if passed else 'FAIL'}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_REPORT, key=lambda r: int(r[0][1:])):
        terminalreporter.write_line(f"{criterion:>4} {'PASS' if passed else 'FAIL'}  {detail}")
