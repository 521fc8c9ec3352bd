from __future__ import annotations

import pytest

_RESULTS: dict[int, tuple[str, str]] = {}
_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    report = outcome.get_result()
    if report.when != "call" and report.passed:
        return
    state = "SKIP" if report.skipped else "FAIL" if report.failed else "PASS"
    number, title = marker.args
    # several tests may share a criterion; the worst outcome wins
    previous = _RESULTS.get(number)
    if previous is None or _RANK[state] > _RANK[previous[0]]:
        _RESULTS[number] = (state, title)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        state, title = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {state}  {title}")
