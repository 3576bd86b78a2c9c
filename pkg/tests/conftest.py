import pytest

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one item of an acceptance criterion for the end-of-run summary."""
    def record(number: int, item: str, passed: bool, note: str = "") -> None:
        ACCEPTANCE.setdefault(number, []).append((item, passed, note))
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        items = ACCEPTANCE[number]
        failed = [(i, note) for i, ok, note in items if not ok]
        status = "PASS" if not failed else "FAIL"
        tr.write_line(f"criterion {number}: {status} ({len(items) - len(failed)}/{len(items)} items)")
        for item, note in failed:
            tr.write_line(f"    failed: {item}{': ' + note if note else ''}")
