import pytest

_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``report(n, passed, detail)`` records one acceptance line and asserts it."""
    lines = request.config.stash.setdefault(_KEY, {})

    def report(n, passed, detail):
        lines[n] = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"
        assert passed, detail

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
