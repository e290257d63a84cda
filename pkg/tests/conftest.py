"""Shared pytest wiring.

The acceptance tests register a verdict per criterion here; the terminal
summary then echoes one `CRITERION k PASS|FAIL` line each at the end of the
session, where they stay visible regardless of output capturing.
"""

_criterion_results = {}


def record_criterion(number, passed):
    _criterion_results[number] = bool(passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criterion_results):
        status = "PASS" if _criterion_results[number] else "FAIL"
        terminalreporter.write_line(f"CRITERION {number} {status}")
