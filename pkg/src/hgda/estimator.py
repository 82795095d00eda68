"""scikit-learn style front end.

Graph inputs replace the usual ``X`` arrays: ``fit`` takes the labeled source
graph as ``X`` and the unlabeled target graph as ``target``. Hyperparameters
are plain constructor arguments, so ``get_params``/``set_params``/``clone``
work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .graph import Graph, from_edges
from .model import HgdaConfig, forward
from .trainer import predict, train


def check_graph(X, *, require_labels: bool = False, n_features: int | None = None) -> Graph:
    """Validate an estimator input and return it as a ``Graph``."""
    if not isinstance(X, Graph):
        raise TypeError(f"expected a hgda.Graph, got {type(X).__name__}; "
                        "build one with hgda.as_graph(adjacency, features, labels)")
    if not np.all(np.isfinite(X.features)):
        raise ValueError("graph features contain NaN or infinity")
    if require_labels and not X.is_fully_labeled():
        raise ValueError("source must be labeled")
    if n_features is not None and X.feature_dim != n_features:
        raise ValueError(f"graph has {X.feature_dim} features, but the estimator was fitted "
                         f"with {n_features}")
    return X


def as_graph(adjacency, features, labels=None, num_classes: int | None = None) -> Graph:
    """Build a ``Graph`` from a (dense or sparse) adjacency matrix and feature array."""
    import scipy.sparse as sp

    adj = sp.coo_matrix(adjacency)
    keep = adj.data != 0
    edges = np.stack([adj.row[keep], adj.col[keep]], axis=1)
    features = np.asarray(features, dtype=np.float64)
    return from_edges(features.shape[0], edges, features, labels, num_classes=num_classes)


class HGDAClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Node classifier adapted from a labeled source graph to an unlabeled target graph.

    ``transform`` returns the fused node embedding; ``predict`` the arg-max class.
    Restricting ``channels`` to one of ``"L"``, ``"F"``, ``"H"`` gives the
    single-filter variants; ``channels=("L",), alpha=1, beta=0, align_weight=0``
    is a plain source-only GCN.
    """

    def __init__(self, hidden_dims=(128, 16), dropout=0.5, channels=("L", "F", "H"),
                 alpha=0.1, beta=0.1, align_weight=1.0, lr=5e-4, weight_decay=1e-4,
                 epochs=200, seed=0):
        self.hidden_dims = hidden_dims
        self.dropout = dropout
        self.channels = channels
        self.alpha = alpha
        self.beta = beta
        self.align_weight = align_weight
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.seed = seed

    def _config(self) -> HgdaConfig:
        return HgdaConfig(hidden_dims=tuple(self.hidden_dims), dropout_p=self.dropout,
                          channels_enabled=tuple(self.channels), alpha=self.alpha,
                          beta=self.beta, align_weight=self.align_weight, lr=self.lr,
                          weight_decay=self.weight_decay, epochs=self.epochs, seed=self.seed,
                          track_accuracy=False)

    def fit(self, X, y=None, target=None):
        """Train on source graph ``X``; ``y`` optionally overrides its labels.

        Without ``target`` the source graph doubles as the target, i.e. no adaptation.
        """
        source = check_graph(X)
        if y is not None:
            y = np.asarray(y, dtype=np.int64)
            source = Graph(source.adjacency, source.features, y, source.num_classes, source.name)
        check_graph(source, require_labels=True)
        target = source if target is None else check_graph(target, n_features=source.feature_dim)
        self.model_, self.report_, _ = train(source, target, self._config())
        self.classes_ = np.arange(source.num_classes)
        self.n_features_in_ = source.feature_dim
        return self

    def _checked(self, X) -> Graph:
        check_is_fitted(self, "model_")
        return check_graph(X, n_features=self.n_features_in_)

    def decision_function(self, X) -> np.ndarray:
        g = self._checked(X)
        return predict(self.model_, g)[1]

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]

    def transform(self, X) -> np.ndarray:
        g = self._checked(X)
        return forward(g, self.model_).embedding.data

    def score(self, X, y=None, sample_weight=None) -> float:
        g = self._checked(X)
        y = g.labels if y is None else np.asarray(y)
        if y is None:
            raise ValueError("scoring needs labels")
        known = y >= 0
        return float(np.average(self.predict(g)[known] == y[known],
                                weights=None if sample_weight is None
                                else np.asarray(sample_weight)[known]))
