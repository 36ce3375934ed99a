"""Shared test plumbing: collects the acceptance-criterion verdict lines
and echoes them in the terminal summary, so each headline check reports
one PASS/FAIL line even when pytest captures stdout."""

CRITERION_LINES: list[str] = []


def record_criterion(line: str) -> None:
    CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.write_line(line)
