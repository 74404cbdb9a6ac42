import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_acceptance_results: dict[int, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n, label = marker.args
    if report.when == "call":
        _acceptance_results[n] = (label, report.passed)
    elif report.failed:
        # setup or teardown blew up; the criterion did not pass
        _acceptance_results[n] = (label, False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance_results):
        label, passed = _acceptance_results[n]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {n} ({label}): {verdict}")
