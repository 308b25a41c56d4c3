import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def acceptance_report():
    def report(number: int, title: str, passed, detail: str = ""):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        line = f"criterion {number} [{status}] {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return line

    return report
