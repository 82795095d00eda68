import numpy as np
import pytest

from hgda.graph import from_edges


def random_graph(rng, n, p=0.3, d=4, num_classes=3, isolated_ok=True):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = np.argwhere(upper)
    features = rng.normal(size=(n, d))
    labels = rng.integers(0, num_classes, size=n)
    return from_edges(n, edges, features, labels, num_classes=num_classes)


def dense_normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    a_hat = adj + np.eye(n)
    d = np.diag(1.0 / np.sqrt(adj.sum(axis=1) + 1.0))
    return d @ a_hat @ d


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_pair():
    from hgda.synth import GenSpec, generate_pair
    src = GenSpec(num_nodes=60, num_classes=3, mean_degree=4, homophily_mix=[(1.0, 8.0, 2.0)],
                  feature_dim=6, feature_noise_sigma=1.0, seed=3)
    tgt = GenSpec(num_nodes=45, num_classes=3, mean_degree=4, homophily_mix=[(1.0, 3.0, 7.0)],
                  feature_dim=6, feature_noise_sigma=1.0, seed=3)
    return generate_pair(src, tgt)
