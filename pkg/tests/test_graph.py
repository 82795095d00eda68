import json

import numpy as np
import pytest
import scipy.sparse as sp

from hgda.graph import (Graph, GraphFormatError, from_edges, load_graph, normalized_adjacency,
                        normalized_laplacian, save_graph, spmm)

from .conftest import dense_normalized_adjacency, random_graph


def write_dataset(path, n, c, d, edges, features, labels=None):
    path.mkdir(parents=True, exist_ok=True)
    (path / "meta.json").write_text(json.dumps(
        {"name": "t", "num_nodes": n, "num_classes": c, "feature_dim": d}))
    (path / "edges.csv").write_text("".join(f"{a},{b}\n" for a, b in edges))
    (path / "features.csv").write_text(
        "".join(",".join(str(x) for x in row) + "\n" for row in features))
    if labels is not None:
        (path / "labels.csv").write_text("".join(f"{y}\n" for y in labels))
    return path


def test_load_empty_edges(tmp_path):
    g = load_graph(write_dataset(tmp_path / "g", 3, 2, 1, [], [[0.0]] * 3, [0, 1, 0]))
    assert g.num_nodes == 3
    assert g.adjacency.nnz == 0


def test_load_symmetrizes(tmp_path):
    g = load_graph(write_dataset(tmp_path / "g", 2, 2, 1, [(0, 1)], [[1.0], [2.0]], [0, 1]))
    dense = g.adjacency.toarray()
    assert dense[0, 1] == 1 and dense[1, 0] == 1
    assert g.num_edges == 1


def test_load_dedups_and_drops_self_loops(tmp_path):
    g = load_graph(write_dataset(tmp_path / "g", 3, 2, 1, [(0, 1), (1, 0), (0, 1), (2, 2)],
                                 [[0.0]] * 3, [0, 1, 0]))
    np.testing.assert_array_equal(g.adjacency.toarray(),
                                  [[0, 1, 0], [1, 0, 0], [0, 0, 0]])


def test_label_out_of_range(tmp_path):
    with pytest.raises(GraphFormatError, match="outside"):
        load_graph(write_dataset(tmp_path / "g", 2, 3, 1, [], [[0.0]] * 2, [0, 5]))


def test_unknown_label_allowed(tmp_path):
    g = load_graph(write_dataset(tmp_path / "g", 2, 3, 1, [], [[0.0]] * 2, [-1, 2]))
    assert not g.is_fully_labeled()


def test_missing_file(tmp_path):
    path = write_dataset(tmp_path / "g", 2, 2, 1, [], [[0.0]] * 2)
    (path / "edges.csv").unlink()
    with pytest.raises(FileNotFoundError):
        load_graph(path)


def test_edge_out_of_range(tmp_path):
    with pytest.raises(GraphFormatError):
        load_graph(write_dataset(tmp_path / "g", 2, 2, 1, [(0, 7)], [[0.0]] * 2, [0, 1]))


def test_ragged_features(tmp_path):
    path = write_dataset(tmp_path / "g", 2, 2, 2, [], [[0.0, 1.0], [1.0]], [0, 1])
    with pytest.raises(GraphFormatError, match="expected 2 features"):
        load_graph(path)


def test_missing_labels_means_unlabeled(tmp_path):
    g = load_graph(write_dataset(tmp_path / "g", 2, 2, 1, [(0, 1)], [[0.0]] * 2))
    assert g.labels is None


def test_round_trip(tmp_path, rng):
    g = random_graph(rng, 15, d=3)
    g2 = load_graph(save_graph(g, tmp_path / "g"))
    assert (g.adjacency != g2.adjacency).nnz == 0
    np.testing.assert_array_equal(g.features, g2.features)
    np.testing.assert_array_equal(g.labels, g2.labels)
    assert g2.num_classes == g.num_classes


def test_asymmetric_adjacency_rejected():
    adj = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=float))
    with pytest.raises(GraphFormatError, match="symmetric"):
        Graph(adj, np.zeros((2, 1)), None, 1)


def test_isolated_node_operators():
    g = from_edges(1, [], [[1.0]], [0])
    np.testing.assert_array_equal(normalized_adjacency(g).toarray(), [[1.0]])
    np.testing.assert_array_equal(normalized_laplacian(g).toarray(), [[0.0]])


def test_two_node_operators():
    g = from_edges(2, [(0, 1)], [[1.0], [1.0]], [0, 0])
    expected = dense_normalized_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(expected, [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(normalized_adjacency(g).toarray(), expected, atol=1e-15)
    np.testing.assert_allclose(normalized_laplacian(g).toarray(), [[0.5, -0.5], [-0.5, 0.5]],
                               atol=1e-15)


def test_star_center():
    g = from_edges(4, [(0, 1), (0, 2), (0, 3)], np.zeros((4, 1)), [0] * 4)
    dense = dense_normalized_adjacency(g.adjacency.toarray())
    assert dense[0, 0] == pytest.approx(0.25)
    np.testing.assert_allclose(normalized_adjacency(g).toarray(), dense, atol=1e-15)


def test_operator_pattern_and_identity(rng):
    for n in (1, 5, 20, 60):
        g = random_graph(rng, n, p=0.2)
        a = normalized_adjacency(g)
        lap = normalized_laplacian(g)
        np.testing.assert_allclose((a + lap).toarray(), np.eye(n), atol=1e-12, rtol=0)
        np.testing.assert_allclose(a.toarray(), a.toarray().T, atol=1e-12, rtol=0)
        assert a.toarray().min() >= 0 and a.toarray().max() <= 1
        pattern = (g.adjacency + sp.identity(n)).toarray() != 0
        np.testing.assert_array_equal(a.toarray() != 0, pattern)
        assert a.has_sorted_indices


def test_spmm_matches_dense(rng):
    for n in range(1, 21):
        g = random_graph(rng, n, p=0.3)
        op = normalized_adjacency(g)
        m = rng.normal(size=(n, 3))
        np.testing.assert_allclose(spmm(op, m), op.toarray() @ m, atol=1e-10, rtol=0)


def test_spmm_examples():
    eye = sp.identity(3, format="csr")
    m = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(spmm(eye, m), m)
    np.testing.assert_array_equal(spmm(sp.csr_matrix((3, 3)), m), np.zeros((3, 2)))
    g = from_edges(2, [(0, 1)], [[1.0], [1.0]], [0, 0])
    np.testing.assert_allclose(spmm(normalized_adjacency(g), np.eye(2)), [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError, match="dimension"):
        spmm(eye, np.ones((2, 2)))
