import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL"}.get(report.outcome, "SKIP")
        measured = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _RESULTS[item.nodeid] = (str(marker.args[0]), marker.args[1], status, measured)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, measured in _RESULTS.values():
        line = f"criterion {number}: {status}: {title}"
        if measured:
            line += f" [{measured}]"
        terminalreporter.write_line(line)
