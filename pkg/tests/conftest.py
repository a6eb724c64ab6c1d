import re

import pytest

from crawlsim.graph_store import Document, DocumentStore, WebGraph

_acceptance = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _acceptance.get(report.nodeid)
        if prev is None or prev == "PASS":
            _acceptance[report.nodeid] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, verdict in sorted(_acceptance.items()):
        name = nodeid.split("::")[-1]
        m = re.match(r"test_c(\d+)_", name)
        label = f"criterion {int(m.group(1)):2d}" if m else name
        terminalreporter.write_line(f"{verdict}  {label}  {name}")


def make_graph(edges, node_count=None):
    edges = list(edges)
    if node_count is None:
        node_count = 1 + max((max(u, v) for u, v in edges), default=-1)
    return WebGraph.from_edges([u for u, _ in edges], [v for _, v in edges], node_count)


def make_store(node_count, missing=()):
    missing = set(missing)
    return DocumentStore(
        {u: Document(u, f"node://{u}", f"page {u}") for u in range(node_count) if u not in missing},
        node_count,
    )


@pytest.fixture
def chain():
    g = make_graph([(0, 1), (1, 2), (2, 3)])
    return g, make_store(4)


@pytest.fixture
def diamond():
    g = make_graph([(0, 1), (0, 2), (1, 3), (2, 3)])
    return g, make_store(4)
