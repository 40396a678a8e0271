"""Collects the acceptance verdicts and prints them at the end of the session."""

VERDICTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str):
    VERDICTS[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
