"""Shared fixtures, plus the one-line-per-criterion summary for acceptance tests.

Acceptance tests carry ``@pytest.mark.acceptance("criterion name")``. A
criterion passes when all of its tests pass, fails when any fails, and is
reported as NOT RUN when all of its tests were skipped.
"""

import pytest

from sbrbench.dataio import preprocess, split_by_days
from sbrbench.synthetic import click_log

_criteria: dict[str, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and marker.args:
        report.criterion = marker.args[0]


def pytest_runtest_logreport(report):
    name = getattr(report, "criterion", None)
    if name is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        reason = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2].removeprefix("Skipped: ")
        _criteria.setdefault(name, []).append((report.outcome, reason))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _criteria.items():
        outcomes = {o for o, _ in results}
        if "failed" in outcomes:
            status = "FAIL"
        elif outcomes == {"skipped"}:
            status = "NOT RUN"
        elif "skipped" in outcomes:
            status = "PARTIAL"
        else:
            status = "PASS"
        reasons = sorted({r for _, r in results if r})
        suffix = f" ({'; '.join(reasons)})" if reasons else ""
        terminalreporter.write_line(f"{status:8} {name}{suffix}")


@pytest.fixture(scope="session")
def synth_split():
    data = preprocess(click_log(n_sessions=1500, n_items=200, days=20, seed=11))
    return split_by_days(data, 2)
