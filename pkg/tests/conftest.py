"""Per-criterion PASS/FAIL summary for the acceptance suite."""

import pytest

_outcomes = {}


def _criterion(item):
    mark = item.get_closest_marker("criterion")
    return mark.args if mark else None


def pytest_collection_modifyitems(items):
    for item in items:
        crit = _criterion(item)
        if crit:
            _outcomes.setdefault(crit[0], {"title": crit[1], "failed": False, "ran": 0, "details": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.criterion = _criterion(item)


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if not crit:
        return
    entry = _outcomes[crit[0]]
    if report.failed:
        entry["failed"] = True
    if report.when == "call":
        entry["ran"] += 1
        entry["details"] += [v for k, v in report.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    done = {k: v for k, v in _outcomes.items() if v["ran"] or v["failed"]}
    if not done:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(done):
        e = done[num]
        status = "FAIL" if e["failed"] else "PASS"
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"[{status}] C{num:02d} {e['title']}" + (f" -- {detail}" if detail else ""))
