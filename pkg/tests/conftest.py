"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

from collections import OrderedDict

import pytest

_RESULTS = OrderedDict()

TITLES = {
    1: "threshold, example 5.2",
    2: "threshold cross-validation, example 5.3",
    3: "extinction dynamics, example 5.2",
    4: "persistence dynamics, example 5.3",
    5: "comparison principle suite",
    6: "stationary-density oracle",
    7: "numerical order",
    8: "determinism",
}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        passed = report.passed and not hasattr(report, "wasxfail")
        name = report.nodeid.split("::")[-1]
        _RESULTS.setdefault(props["criterion"], []).append((name, passed, props.get("measured", "")))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        checks = _RESULTS[n]
        ok = all(p for _, p, _ in checks)
        parts = "; ".join(f"{name.removeprefix('test_')} {'PASS' if p else 'FAIL'} [{m}]"
                          for name, p, m in checks)
        tr.write_line(f"criterion {n} ({TITLES.get(n, '')}): {'PASS' if ok else 'FAIL'} | {parts}")
