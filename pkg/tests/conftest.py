import pytest

from corpora import C0

# filled by test_acceptance; one line per criterion
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def c0():
    return list(C0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
