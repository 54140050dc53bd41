import pytest

CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion and assert it."""

    def record(name: str, ok: bool, detail: str = ""):
        CRITERIA.append(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else ""))
        print(CRITERIA[-1])
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
