import numpy as np
import pytest

from trainer.data import GraphRecord, NormStats


def make_graph(rng: np.random.Generator, n_nodes: int, name: str,
               label: float = 0.5, degree: int = 3) -> GraphRecord:
    """Random rooted-tree graph record with plausible feature magnitudes."""
    x = rng.normal(size=(n_nodes, 11))
    edges = tuple(
        (int(rng.integers(0, k)), k) for k in range(1, n_nodes)
    )
    return GraphRecord(x=x, edges=edges, label_ratio=label, name=name,
                       c_total=1e-14, degree=degree)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_stats():
    return NormStats(np.zeros(11), np.ones(11))


@pytest.fixture
def tiny_corpus(rng):
    """60 labeled graphs over three degrees with smooth feature-dependent
    labels, small enough to train in seconds."""
    graphs = []
    for i in range(60):
        n = int(rng.integers(4, 10))
        g = make_graph(rng, n, f"g{i:03d}", degree=3 + i % 3)
        label = 1.0 / (1.0 + np.exp(-float(g.x.mean())))
        graphs.append(GraphRecord(g.x, g.edges, label, g.name, g.c_total,
                                  g.degree))
    return graphs
