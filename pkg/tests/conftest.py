import numpy as np
import pytest

from hijackimpact.topology import AsGraph, Edge, Relationship, gen_synthetic_topology

P2C = Relationship.PROVIDER_TO_CUSTOMER
P2P = Relationship.PEER_TO_PEER


def random_small_graph(rng: np.random.Generator, max_nodes: int = 10) -> AsGraph:
    """Arbitrary relationship graph (may be disconnected or contain provider cycles)."""
    n = int(rng.integers(2, max_nodes + 1))
    asns = rng.permutation(np.arange(1, n + 1) * int(rng.integers(1, 50)))
    edges, seen = [], set()
    for _ in range(int(rng.integers(1, 2 * n + 1))):
        i, j = rng.choice(n, 2, replace=False)
        a, b = int(asns[i]), int(asns[j])
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        edges.append(Edge(a, b, P2P if rng.random() < 0.3 else P2C))
    return AsGraph(edges, nodes=[int(x) for x in asns])


@pytest.fixture(scope="session")
def mid_graph():
    return gen_synthetic_topology(2000, 11)


@pytest.fixture
def chain_graph():
    # 10 provides for 1 and 2; 1 and 2 are the two edge ASes
    return AsGraph([Edge(10, 1, P2C), Edge(10, 2, P2C)])


# lines recorded by the acceptance suite, repeated at the end of the run
CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
