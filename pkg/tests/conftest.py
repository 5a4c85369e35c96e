import pytest

_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict for the terminal summary, then assert."""

    def record(criterion, ok, detail):
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
