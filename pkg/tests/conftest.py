import pytest

from whitneylab import builtins

LINEAR = ("whitney-1935", "whitney-rhombus", "diag-toy")
ARCS = ("koch", "tent", "tent-reversed", "segment")


@pytest.fixture(scope="session")
def systems():
    """One instance per built-in, so cached clouds and chains are shared."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = builtins.system(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def koch_lift():
    from whitneylab.arclift import lift, smallest_whitney_level

    arc = builtins.system("koch")
    k, _, report = smallest_whitney_level(arc, 5)
    return lift(arc, k), k, report


# ---------------------------------------------------------------- acceptance reporting

import re  # noqa: E402
import time  # noqa: E402

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_sessionstart(session):
    session.config.whitneylab_started = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    """The wall-clock criterion has to run after everything else."""
    last = [it for it in items if (m := it.get_closest_marker("criterion")) and m.args[0] == 10]
    items[:] = [it for it in items if it not in last] + last


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    ok = rep.passed and _RESULTS.get(number, (True,))[0]
    lines = [ln for ln in rep.capstdout.splitlines() if ln.startswith("criterion")]
    detail = re.sub(r"^criterion\s+\d+: (PASS|FAIL)\s+", "", lines[-1]) if lines else ""
    _RESULTS[number] = (ok, title, rep.duration if rep.when == "call" else 0.0, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, title, seconds, detail = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.2f} s)")
        if detail:
            terminalreporter.write_line(f"              {detail}")
