"""Per-node homophily, heterophily histograms, histogram divergences and subgroup profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph

NUM_BINS = 10
BIN_EDGES = np.linspace(0.0, 1.0, NUM_BINS + 1)
KL_SMOOTHING = 1e-6


class HomophilyError(ValueError):
    pass


def node_homophily(g: Graph, v: int) -> float | None:
    """Fraction of ``v``'s neighbours sharing its label; ``None`` for isolated nodes."""
    if g.labels is None:
        raise HomophilyError("graph has no labels")
    nbrs = g.neighbors(v)
    if nbrs.size == 0:
        return None
    y = g.labels
    if y[v] < 0 or np.any(y[nbrs] < 0):
        raise HomophilyError(f"node {v} or one of its neighbours is unlabeled")
    return float(np.count_nonzero(y[nbrs] == y[v])) / nbrs.size


def node_homophily_all(g: Graph) -> np.ndarray:
    """Vectorised ``node_homophily`` over all nodes; NaN marks isolated nodes."""
    if g.labels is None:
        raise HomophilyError("graph has no labels")
    a = g.adjacency.tocoo()
    y = g.labels
    deg = g.degrees()
    involved = (deg > 0) & (y >= 0)
    if np.any((deg > 0) & (y < 0)) or np.any(y[a.col] < 0):
        raise HomophilyError("homophily requires labels on every non-isolated node")
    same = np.bincount(a.row, weights=(y[a.row] == y[a.col]).astype(float),
                       minlength=g.num_nodes)
    out = np.full(g.num_nodes, np.nan)
    out[involved] = same[involved] / deg[involved]
    return out


def bin_index(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to bins; interior edges go to the upper bin, 1.0 to the last."""
    idx = np.floor(np.asarray(values) * NUM_BINS + 1e-9).astype(np.int64)
    return np.clip(idx, 0, NUM_BINS - 1)


@dataclass
class HomophilyHistogram:
    bin_edges: np.ndarray
    mass: np.ndarray
    num_counted: int
    num_excluded: int

    def to_dict(self) -> dict:
        return {"bin_edges": [float(x) for x in self.bin_edges],
                "mass": [float(x) for x in self.mass],
                "num_counted": int(self.num_counted),
                "num_excluded": int(self.num_excluded)}

    @classmethod
    def from_dict(cls, d: dict) -> "HomophilyHistogram":
        return cls(np.asarray(d["bin_edges"], float), np.asarray(d["mass"], float),
                   int(d["num_counted"]), int(d["num_excluded"]))

    @classmethod
    def from_values(cls, values: np.ndarray, num_excluded: int = 0) -> "HomophilyHistogram":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise HomophilyError("no values to bin")
        counts = np.bincount(bin_index(values), minlength=NUM_BINS).astype(float)
        return cls(BIN_EDGES.copy(), counts / counts.sum(), int(values.size), num_excluded)


def heterophily_histogram(g: Graph) -> HomophilyHistogram:
    """Binned distribution of ``1 - node_homophily`` over non-isolated nodes."""
    hom = node_homophily_all(g)
    counted = ~np.isnan(hom)
    if not np.any(counted):
        raise HomophilyError("graph has no labeled non-isolated nodes")
    return HomophilyHistogram.from_values(1.0 - hom[counted],
                                          num_excluded=int(np.count_nonzero(~counted)))


def _check_same_binning(p: HomophilyHistogram, q: HomophilyHistogram) -> None:
    if p.bin_edges.shape != q.bin_edges.shape or not np.allclose(p.bin_edges, q.bin_edges,
                                                                 rtol=0, atol=1e-12):
        raise HomophilyError("histograms use different bin edges")


def smoothed_mass(mass: np.ndarray, eps: float = KL_SMOOTHING) -> np.ndarray:
    m = np.asarray(mass, dtype=float) + eps
    return m / m.sum()


def kl_histogram(p: HomophilyHistogram, q: HomophilyHistogram) -> float:
    """KL(p || q) over bins after epsilon-smoothing both masses."""
    _check_same_binning(p, q)
    ps, qs = smoothed_mass(p.mass), smoothed_mass(q.mass)
    return max(float(np.sum(ps * np.log(ps / qs))), 0.0)


def wasserstein1_histogram(p: HomophilyHistogram, q: HomophilyHistogram) -> float:
    """1-D earth mover's distance between bin masses, bins placed on the uniform grid."""
    _check_same_binning(p, q)
    width = np.diff(p.bin_edges)
    cdf_gap = np.abs(np.cumsum(p.mass) - np.cumsum(q.mass))
    # the last CDF entry is 1 for both, so it contributes nothing
    return float(np.sum(cdf_gap[:-1] * width[:-1]))


@dataclass
class SubgroupProfile:
    source_proportion: np.ndarray
    target_proportion: np.ndarray
    proportion_difference: np.ndarray
    target_accuracy: list = field(default=None)
    target_counts: np.ndarray = field(default=None)

    def to_dict(self) -> dict:
        edges = BIN_EDGES
        out = {
            "bins": [[float(edges[i]), float(edges[i + 1])] for i in range(NUM_BINS)],
            "source_proportion": [float(x) for x in self.source_proportion],
            "target_proportion": [float(x) for x in self.target_proportion],
            "proportion_difference": [float(x) for x in self.proportion_difference],
        }
        if self.target_counts is not None:
            out["target_counts"] = [int(x) for x in self.target_counts]
        if self.target_accuracy is not None:
            out["target_accuracy"] = [None if a is None else float(a) for a in self.target_accuracy]
        return out


def subgroup_profile(source: Graph, target: Graph, target_preds=None) -> SubgroupProfile:
    """Per-homophily-bin node proportions in both graphs and, given predictions, target accuracy.

    Bins are over node homophily (not heterophily). Bins with no target nodes get
    accuracy ``None``.
    """
    hom_s = node_homophily_all(source)
    hom_t = node_homophily_all(target)
    ok_s, ok_t = ~np.isnan(hom_s), ~np.isnan(hom_t)
    if not np.any(ok_s) or not np.any(ok_t):
        raise HomophilyError("both graphs need at least one labeled non-isolated node")
    bins_s = bin_index(hom_s[ok_s])
    bins_t = bin_index(hom_t[ok_t])
    cnt_s = np.bincount(bins_s, minlength=NUM_BINS).astype(float)
    cnt_t = np.bincount(bins_t, minlength=NUM_BINS)
    prop_s = cnt_s / cnt_s.sum()
    prop_t = cnt_t / cnt_t.sum()
    profile = SubgroupProfile(prop_s, prop_t, np.abs(prop_s - prop_t), target_counts=cnt_t)

    if target_preds is not None:
        preds = np.asarray(target_preds)
        if preds.shape != (target.num_nodes,):
            raise HomophilyError(
                f"predictions length {preds.shape} does not match {target.num_nodes} nodes")
        correct = (preds[ok_t] == target.labels[ok_t]).astype(float)
        hits = np.bincount(bins_t, weights=correct, minlength=NUM_BINS)
        profile.target_accuracy = [None if cnt_t[b] == 0 else float(hits[b] / cnt_t[b])
                                   for b in range(NUM_BINS)]
    return profile
