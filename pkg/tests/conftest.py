"""Collects acceptance-criterion outcomes and prints one line per criterion."""

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        numbers = [m.args[0] for m in item.iter_markers("criterion")]
        if numbers:
            item.user_properties.append(("criteria", numbers))


def pytest_runtest_logreport(report):
    numbers = dict(report.user_properties).get("criteria")
    if not numbers:
        return
    # setup/teardown failures count against the criterion too
    if report.when == "call" or report.failed:
        for n in numbers:
            _CRITERIA.setdefault(n, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status} ({sum(results)}/{len(results)} checks)")
