import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""

    def report(number: int, ok: bool, detail: str, seconds: float | None = None) -> bool:
        took = f" [{seconds:.1f}s]" if seconds is not None else ""
        _ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}{took}"
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
