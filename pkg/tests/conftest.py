import numpy as np
import pytest

from nsch.spectral import make_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[2, 3], ids=["2d", "3d"])
def grid(request):
    return make_grid(request.param, 16 if request.param == 3 else 32)


@pytest.fixture
def grid2():
    return make_grid(2, 32)


# -- acceptance reporting -----------------------------------------------------
# Tests marked ``criterion(number, title)`` are collected into one PASS/FAIL
# line per criterion, printed in the terminal summary.

_CRITERIA = pytest.StashKey[dict]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    table = item.config.stash.setdefault(_CRITERIA, {})
    entry = table.setdefault(number, {"title": title, "passed": True, "details": []})
    entry["passed"] &= rep.passed
    entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_CRITERIA, None)
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        e = table[number]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"CRITERION {number:2d} {status}  {e['title']}")
        for d in e["details"]:
            terminalreporter.write_line(f"    {d}")
