import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from feps.topology import load_fixture  # noqa: E402

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")
    config.addinivalue_line("markers", "slow: long-running simulation test")


def pytest_runtest_logreport(report):
    if report.when not in ("setup", "call") or "test_acceptance" not in report.nodeid:
        return
    info = getattr(report, "_criterion", None)
    if info is None:
        return
    n, title, details = info
    row = _CRITERIA.setdefault(n, {"title": title, "ok": True, "ran": False, "details": []})
    if report.when == "call":
        row["ran"] = True
        row["details"].extend(details)
    if report.failed:
        row["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        details = [v for k, v in item.user_properties if k == "detail"]
        rep._criterion = (m.args[0], m.args[1], details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        row = _CRITERIA[n]
        status = "PASS" if row["ok"] and row["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {row['title']}")
        for d in row["details"]:
            terminalreporter.write_line(f"               {d}")


@pytest.fixture(scope="session")
def t1():
    return load_fixture("T1")


@pytest.fixture(scope="session")
def t2():
    return load_fixture("T2")


@pytest.fixture(scope="session")
def t3():
    return load_fixture("T3")


@pytest.fixture(scope="session")
def t4():
    return load_fixture("T4")
