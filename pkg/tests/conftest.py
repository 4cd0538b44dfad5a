import random

import pytest

from nfpool.placement import ServerPool
from nfpool.sfc_model import Nfi, SfcIGraph


def make_igraph(demands, edges, ingress=None, egress=None):
    """Hand-built instance graph where every node is its own NF type."""
    nodes = tuple(Nfi(i, i, float(d)) for i, d in enumerate(demands))
    traffic = {e: float(c) for e, c in edges.items()}
    return SfcIGraph(nodes, traffic, dict(traffic), dict(ingress or {}), dict(egress or {}))


def random_igraph(rng: random.Random, n: int, density: float = 0.35, integer: bool = True):
    """Random DAG over n nodes (edges go from lower to higher id)."""
    demands = [rng.randint(100, 600) for _ in range(n)]
    edges = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                edges[(i, j)] = rng.randint(1, 600) if integer else rng.uniform(1, 600)
    ingress = {0: rng.randint(0, 300)} if n else {}
    egress = {n - 1: rng.randint(0, 300)} if n else {}
    return make_igraph(demands, edges, ingress, egress)


@pytest.fixture
def chain3():
    """a -> b -> c with c_ab = 100 and c_bc = 200."""
    return make_igraph([400, 400, 400], {(0, 1): 100, (1, 2): 200})


@pytest.fixture
def pool():
    return ServerPool()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for k in sorted(report):
            terminalreporter.write_line(report[k])
