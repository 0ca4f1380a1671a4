import pytest

_verdicts = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, summary): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, summary = marker.args
    failed = report.failed
    passed = report.when == "call" and report.passed
    prev = _verdicts.get(number, (summary, True, False))
    _verdicts[number] = (summary, prev[1] and not failed, prev[2] or passed)


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        summary, ok, ran = _verdicts[number]
        verdict = "PASS" if ok and ran else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {summary}")
