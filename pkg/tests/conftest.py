import pytest

N_CRITERIA = 13
_results: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one acceptance criterion; the line is printed at session end."""
    def record(n: int, ok: bool, detail: str) -> bool:
        _results[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed", "error")
               for r in terminalreporter.stats.get(key, [])]
    if not any("test_acceptance" in getattr(r, "nodeid", "") for r in reports):
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in _results:
            ok, detail = _results[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (no result recorded)")
