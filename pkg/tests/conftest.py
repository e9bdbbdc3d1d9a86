import logging

import numpy as np
import pytest

from monotonic_nsm.network import ConnectivityMatrix, Model, NetworkSpec, PopulationSpec, Role

logging.getLogger("monotonic_nsm").setLevel(logging.ERROR)


def single_population(params, size=1, model=Model.LIF, pop_id="p", role=Role.STATE):
    spec = NetworkSpec((PopulationSpec(pop_id, size, model, params, role, 0),), (), 0)
    return spec, empty_matrix(size)


def empty_matrix(n):
    z = np.zeros(0, np.int64)
    return ConnectivityMatrix(z, z, np.zeros(0, np.int8), np.zeros(0), np.zeros(0, np.int32), n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "ran": False})
    if call.when == "call" or call.excinfo is not None:
        entry["ran"] = True
        if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
            entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n:2d}: {e['title']}")
