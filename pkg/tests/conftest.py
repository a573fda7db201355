import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_log(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_LINES]

    def log(number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        lines.append(f"[{status}] criterion {number}: {title}" + (f" -- {detail}" if detail else ""))

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
