"""Shared pytest wiring.

The acceptance suite doubles as the release gate, so each of its tests is
echoed as a single PASS/FAIL line at the end of the run where it is easy
to spot in CI logs.
"""

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.failed:
        _acceptance[name] = "FAIL"
    elif report.skipped:
        _acceptance[name] = "SKIP"
    elif report.when == "call":
        _acceptance.setdefault(name, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance")
    for name in sorted(_acceptance):
        terminalreporter.write_line(f"[ACCEPTANCE] {name}: {_acceptance[name]}")
