import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Print and record one PASS/FAIL line for an acceptance criterion."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
