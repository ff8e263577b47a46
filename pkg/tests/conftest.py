"""Shared pytest wiring: the acceptance-criteria summary hook.

Tests marked ``@pytest.mark.criterion("<label>")`` get one PASS/FAIL line
each in a dedicated section at the end of the run, so the acceptance gate
is readable at a glance.
"""

from __future__ import annotations

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(label): acceptance criterion verified by this test",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # Label the call-phase report, and any phase that failed (setup errors
    # would otherwise leave the criterion unreported).
    if report.when == "call" or report.failed:
        report.criterion_label = marker.args[0]


_VERDICT_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts: dict[str, str] = {}
    for status, verdict in (
        ("passed", "PASS"),
        ("skipped", "SKIP"),
        ("failed", "FAIL"),
        ("error", "FAIL"),
    ):
        for report in terminalreporter.stats.get(status, []):
            label = getattr(report, "criterion_label", None)
            if label is None:
                continue
            seen = verdicts.get(label)
            if seen is None or _VERDICT_RANK[verdict] > _VERDICT_RANK[seen]:
                verdicts[label] = verdict
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(verdicts):
        terminalreporter.write_line(f"{verdicts[label]}  {label}")
