import pytest

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance_line(request):
    """Record one ``CRITERION n: PASS|FAIL`` line for the terminal summary."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number, passed: bool, detail: str):
        lines.append((number, f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda item: str(item[0])):
        terminalreporter.write_line(line)
