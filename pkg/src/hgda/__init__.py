"""Homophily-aware graph domain adaptation."""

from .estimator import HGDAClassifier, as_graph, check_graph
from .graph import Graph, load_graph, normalized_adjacency, normalized_laplacian, save_graph
from .homophily import (HomophilyHistogram, heterophily_histogram, kl_histogram, node_homophily,
                        subgroup_profile, wasserstein1_histogram)
from .model import HgdaConfig, HgdaModel
from .synth import GenSpec, generate, generate_pair
from .trainer import ExperimentReport, bound_diagnostics, evaluate, subgroup_accuracy, train

__version__ = "0.1.0"

__all__ = [
    "ExperimentReport", "GenSpec", "Graph", "HGDAClassifier", "HgdaConfig", "HgdaModel",
    "HomophilyHistogram", "as_graph", "bound_diagnostics", "check_graph", "evaluate",
    "generate", "generate_pair", "heterophily_histogram", "kl_histogram", "load_graph",
    "node_homophily", "normalized_adjacency", "normalized_laplacian", "save_graph",
    "subgroup_accuracy", "subgroup_profile", "train", "wasserstein1_histogram",
]
