import os

import numpy as np
import pytest

from relgraph.graph import new_graph


def pytest_collection_modifyitems(config, items):
    if os.environ.get("RELGRAPH_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow; set RELGRAPH_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


_criteria = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[marker] = "PASS" if report.passed else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_criteria.items()):
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title}")


def random_graph(rng, n, p):
    """Bernoulli(p) graph; independent of the package generators."""
    upper = np.triu(rng.random((n, n)) < p, k=1)
    i, j = np.nonzero(upper)
    return new_graph(n, zip(i.tolist(), j.tolist()))


@pytest.fixture
def cycle4():
    return new_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
