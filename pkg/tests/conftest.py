import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line; it is echoed now and repeated in the terminal summary."""

    def emit(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _LINES.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
