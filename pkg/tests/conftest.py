import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects PASS/FAIL lines so they appear in the terminal summary."""
    return request.config.stash.setdefault(_LINES_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
