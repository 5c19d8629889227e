"""Collects one verdict per acceptance criterion and prints them after the run."""

import pytest

_VERDICTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        details = [str(v) for k, v in item.user_properties if k == "detail"]
        crash = getattr(report.longrepr, "reprcrash", None)
        if report.failed and crash is not None:
            details.append(crash.message.splitlines()[0])
        _VERDICTS[number] = ("PASS" if report.passed else "FAIL", title, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[number]
        line = f"{verdict} criterion {number:>2}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
