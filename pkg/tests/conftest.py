import itertools

import numpy as np
import pytest

from hnd.hypergraph import Hypernetwork


def labelled(*edges):
    return Hypernetwork.from_labelled_edges(edges)


@pytest.fixture
def g0():
    """Hyperedges {1,2,3} and {3,4}; labels 1..4 map to ids 0..3."""
    return labelled([1, 2, 3], [3, 4])


def random_hypernetwork(rng, max_nodes=20, max_edges=None, max_size=5):
    n = int(rng.integers(1, max_nodes + 1))
    m = int(rng.integers(0, (max_edges or n) + 1))
    edges = []
    for _ in range(m):
        k = int(rng.integers(1, min(max_size, n) + 1))
        edges.append(tuple(rng.choice(n, size=k, replace=False).tolist()))
    return Hypernetwork(n, tuple(edges))


def all_hyperedges(n):
    nodes = range(n)
    return [c for k in range(1, n + 1) for c in itertools.combinations(nodes, k)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
