"""Shared pytest hooks: one summary line per acceptance criterion."""

from __future__ import annotations


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" not in report.nodeid:
                continue
            if report.when != "call" and status == "passed":
                continue
            name = report.nodeid.split("::")[-1]
            results.append((name, "PASS" if status == "passed" else "FAIL"))
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in dict(results).items():
            terminalreporter.write_line(f"{status}  {name}")
