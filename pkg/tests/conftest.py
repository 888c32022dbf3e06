import re

_results = {}
_titles = {}

_PAT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


def pytest_collection_modifyitems(items):
    for item in items:
        m = _PAT.search(item.nodeid)
        if m:
            _titles[int(m.group(1))] = (item.function.__doc__ or item.name).strip()


def pytest_runtest_logreport(report):
    m = _PAT.search(report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.failed:
        _results[k] = "FAIL"
    elif report.when == "call":
        _results.setdefault(k, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_titles):
        status = _results.get(k, "FAIL")
        terminalreporter.write_line(f"{status} criterion {k}: {_titles[k]}")
