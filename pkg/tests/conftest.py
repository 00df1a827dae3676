import pytest

# (criterion number, one-line result) recorded by the acceptance suite
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append((number, line))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
