"""Graph container, dataset directory I/O and the normalized propagation operators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

UNKNOWN_LABEL = -1

META_FILE = "meta.json"
EDGES_FILE = "edges.csv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"


class GraphFormatError(ValueError):
    """Raised when a dataset directory or an in-memory graph violates the format."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted attributed graph.

    ``adjacency`` is a CSR matrix holding both (i, j) and (j, i) for every
    edge, with no self-loops and no duplicates. ``labels`` uses ``-1`` for
    unknown entries, or is ``None`` when the graph is entirely unlabeled.
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray | None
    num_classes: int
    name: str = "graph"

    def __post_init__(self):
        validate_graph(self)

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def is_fully_labeled(self) -> bool:
        return self.labels is not None and bool(np.all(self.labels >= 0))

    def edge_list(self) -> np.ndarray:
        """Each undirected edge once, as an (E, 2) array with src < dst."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.stack([coo.row[order], coo.col[order]], axis=1).astype(np.int64)

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.adjacency, np.asarray(features, dtype=np.float64),
                     self.labels, self.num_classes, self.name)

    def permuted(self, perm: np.ndarray) -> "Graph":
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        adj = self.adjacency[perm][:, perm].tocsr()
        adj.sort_indices()
        labels = None if self.labels is None else self.labels[perm]
        return Graph(adj, self.features[perm], labels, self.num_classes, self.name)


def validate_graph(g: Graph) -> None:
    a = g.adjacency
    if not sp.isspmatrix_csr(a):
        raise GraphFormatError("adjacency must be a CSR matrix")
    n = a.shape[0]
    if a.shape != (n, n):
        raise GraphFormatError(f"adjacency must be square, got {a.shape}")
    if g.features.ndim != 2 or g.features.shape[0] != n:
        raise GraphFormatError(
            f"features must have {n} rows, got shape {g.features.shape}")
    if g.num_classes < 1:
        raise GraphFormatError("num_classes must be positive")
    if a.nnz:
        if np.any(a.diagonal() != 0):
            raise GraphFormatError("adjacency must not store self-loops")
        if not np.all(a.data == 1):
            raise GraphFormatError("adjacency must be 0/1 without duplicate edges")
        if (a != a.T).nnz:
            raise GraphFormatError("adjacency must be symmetric")
    if g.labels is not None:
        lab = g.labels
        if lab.shape != (n,):
            raise GraphFormatError(f"labels must have length {n}")
        bad = (lab != UNKNOWN_LABEL) & ((lab < 0) | (lab >= g.num_classes))
        if np.any(bad):
            v = int(np.flatnonzero(bad)[0])
            raise GraphFormatError(
                f"label {int(lab[v])} of node {v} outside [0, {g.num_classes})")


def from_edges(num_nodes: int, edges, features, labels=None, num_classes: int | None = None,
               name: str = "graph") -> Graph:
    """Build a graph from an edge list; symmetrizes, drops self-loops and duplicates."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise GraphFormatError(f"edge endpoint outside [0, {num_nodes})")
    edges = edges[edges[:, 0] != edges[:, 1]]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(num_nodes, num_nodes))
    adj.sum_duplicates()
    adj.data[:] = 1.0
    adj.sort_indices()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(num_nodes, -1)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels is not None and labels.size else 1
    return Graph(adj, features, labels, num_classes, name)


def load_graph(path) -> Graph:
    """Read a dataset directory (meta.json, edges.csv, features.csv, labels.csv).

    ``labels.csv`` may be absent, in which case the graph is unlabeled.
    """
    path = Path(path)
    for required in (META_FILE, EDGES_FILE, FEATURES_FILE):
        if not (path / required).is_file():
            raise FileNotFoundError(f"{path / required} not found")
    meta = json.loads((path / META_FILE).read_text(encoding="utf-8"))
    n = int(meta["num_nodes"])
    d = int(meta["feature_dim"])
    c = int(meta["num_classes"])

    edges = _read_int_rows(path / EDGES_FILE, width=2)
    features = _read_features(path / FEATURES_FILE, n, d)

    labels = None
    if (path / LABELS_FILE).is_file():
        labels = _read_int_rows(path / LABELS_FILE, width=1).ravel()
        if labels.size != n:
            raise GraphFormatError(f"labels.csv has {labels.size} rows, expected {n}")
    return from_edges(n, edges, features, labels, num_classes=c, name=meta.get("name", path.name))


def save_graph(g: Graph, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {"name": g.name, "num_nodes": g.num_nodes,
            "num_classes": g.num_classes, "feature_dim": g.feature_dim}
    (path / META_FILE).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    with open(path / EDGES_FILE, "w", encoding="utf-8") as fh:
        for s, t in g.edge_list():
            fh.write(f"{s},{t}\n")
    with open(path / FEATURES_FILE, "w", encoding="utf-8") as fh:
        for row in g.features:
            # repr() round-trips float64 exactly
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if g.labels is not None:
        with open(path / LABELS_FILE, "w", encoding="utf-8") as fh:
            for y in g.labels:
                fh.write(f"{int(y)}\n")
    return path


def _read_int_rows(file: Path, width: int) -> np.ndarray:
    rows = []
    with open(file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise GraphFormatError(f"{file.name}:{lineno}: expected {width} fields")
            try:
                rows.append([int(p) for p in parts])
            except ValueError as exc:
                raise GraphFormatError(f"{file.name}:{lineno}: {exc}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def _read_features(file: Path, n: int, d: int) -> np.ndarray:
    rows = []
    with open(file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            vals = line.split(",")
            if len(vals) != d:
                raise GraphFormatError(
                    f"{file.name}:{lineno}: expected {d} features, got {len(vals)}")
            rows.append([float(x) for x in vals])
    if len(rows) != n:
        raise GraphFormatError(f"{file.name} has {len(rows)} rows, expected {n}")
    return np.array(rows, dtype=np.float64).reshape(n, d)


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """(D+I)^-1/2 (A+I) (D+I)^-1/2 with self-loops added."""
    n = g.num_nodes
    a_hat = (g.adjacency + sp.identity(n, format="csr")).tocsr()
    inv_sqrt = 1.0 / np.sqrt(g.degrees() + 1.0)
    d = sp.diags(inv_sqrt)
    out = (d @ a_hat @ d).tocsr()
    out.sort_indices()
    return out


def normalized_laplacian(g: Graph) -> sp.csr_matrix:
    """I minus the normalized adjacency."""
    out = (sp.identity(g.num_nodes, format="csr") - normalized_adjacency(g)).tocsr()
    out.sort_indices()
    return out


def spmm(op: sp.spmatrix, m: np.ndarray) -> np.ndarray:
    """Sparse operator times dense matrix."""
    m = np.asarray(m, dtype=np.float64)
    if op.shape[1] != m.shape[0]:
        raise ValueError(f"dimension mismatch: operator {op.shape} vs matrix {m.shape}")
    return np.asarray(op @ m)
