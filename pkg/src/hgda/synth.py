"""Synthetic source/target graph pairs with controllable node-homophily distributions.

Randomness comes from numpy's PCG64 bit generator. Each graph draws from
independent child streams of ``SeedSequence([seed, domain])``: one for class
centers, one for homophily targets and wiring, one for feature noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, from_edges

SOURCE_DOMAIN = 0
TARGET_DOMAIN = 1


class GenSpecError(ValueError):
    pass


@dataclass
class GenSpec:
    num_nodes: int
    num_classes: int
    mean_degree: float
    homophily_mix: list = field(default_factory=lambda: [(1.0, 8.0, 2.0)])
    feature_dim: int = 32
    class_center_scale: float = 1.0
    feature_noise_sigma: float = 1.0
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        self.homophily_mix = [tuple(float(x) for x in comp) for comp in self.homophily_mix]
        self.validate()

    def validate(self) -> None:
        if self.num_classes < 1:
            raise GenSpecError("num_classes must be >= 1")
        if self.num_nodes < self.num_classes:
            raise GenSpecError(
                f"num_nodes >= num_classes violated ({self.num_nodes} < {self.num_classes})")
        if self.mean_degree < 1:
            raise GenSpecError(f"mean_degree >= 1 violated ({self.mean_degree})")
        if self.feature_noise_sigma <= 0:
            raise GenSpecError(f"feature_noise_sigma > 0 violated ({self.feature_noise_sigma})")
        if self.feature_dim < 1:
            raise GenSpecError("feature_dim must be >= 1")
        if not self.homophily_mix:
            raise GenSpecError("homophily_mix must have at least one component")
        for comp in self.homophily_mix:
            if len(comp) != 3:
                raise GenSpecError("homophily_mix components are (weight, beta_a, beta_b)")
            w, a, b = comp
            if w < 0 or a <= 0 or b <= 0:
                raise GenSpecError("homophily_mix needs weight >= 0 and beta parameters > 0")
        total = sum(c[0] for c in self.homophily_mix)
        if abs(total - 1.0) > 1e-9:
            raise GenSpecError(f"homophily_mix weights must sum to 1 (got {total})")
        if not 0 <= self.seed < 2 ** 64:
            raise GenSpecError("seed must be an unsigned 64-bit integer")

    @property
    def mean_homophily(self) -> float:
        return sum(w * a / (a + b) for w, a, b in self.homophily_mix)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["homophily_mix"] = [list(c) for c in self.homophily_mix]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise GenSpecError(f"unknown GenSpec fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise GenSpecError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "GenSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _streams(seed: int, domain: int):
    centers, wiring, noise = np.random.SeedSequence([seed, domain]).spawn(3)
    return (np.random.Generator(np.random.PCG64(centers)),
            np.random.Generator(np.random.PCG64(wiring)),
            np.random.Generator(np.random.PCG64(noise)))


def class_centers(spec: GenSpec, domain: int = SOURCE_DOMAIN) -> np.ndarray:
    rng, _, _ = _streams(spec.seed, domain)
    return rng.normal(0.0, spec.class_center_scale, size=(spec.num_classes, spec.feature_dim))


def sample_homophily_targets(spec: GenSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    weights = np.array([c[0] for c in spec.homophily_mix])
    comp = rng.choice(len(weights), size=n, p=weights / weights.sum())
    a = np.array([c[1] for c in spec.homophily_mix])[comp]
    b = np.array([c[2] for c in spec.homophily_mix])[comp]
    return rng.beta(a, b)


def _wire(labels: np.ndarray, h_target: np.ndarray, stubs: int, rng: np.random.Generator):
    n = labels.size
    num_classes = int(labels.max()) + 1
    members = [np.flatnonzero(labels == c) for c in range(num_classes)]
    others = [np.flatnonzero(labels != c) for c in range(num_classes)]

    same = rng.random((n, stubs)) < h_target[:, None]
    picks = rng.random((n, stubs))
    dst = np.empty((n, stubs), dtype=np.int64)
    for c in range(num_classes):
        rows = np.flatnonzero(labels == c)
        pool_same, pool_other = members[c], others[c]
        u = picks[rows]
        s = same[rows]
        block = np.empty_like(u, dtype=np.int64)
        if pool_same.size > 1:
            # draw among same-class nodes other than the source node itself
            k = np.floor(u * (pool_same.size - 1)).astype(np.int64)
            pos = np.searchsorted(pool_same, rows)[:, None]
            k = k + (k >= pos)
            block[s] = pool_same[k[s]]
        else:
            block[s] = -1
        if pool_other.size:
            block[~s] = pool_other[np.floor(u[~s] * pool_other.size).astype(np.int64)]
        else:
            block[~s] = -1
        dst[rows] = block
    src = np.repeat(np.arange(n), stubs)
    dst = dst.ravel()
    keep = dst >= 0
    return np.stack([src[keep], dst[keep]], axis=1)


def generate(spec: GenSpec, centers: np.ndarray | None = None,
             domain: int = SOURCE_DOMAIN) -> Graph:
    """Draw one graph; ``centers`` overrides the spec's own class centers."""
    spec.validate()
    n, c = spec.num_nodes, spec.num_classes
    own_centers, wiring_rng, noise_rng = _streams(spec.seed, domain)
    if centers is None:
        centers = own_centers.normal(0.0, spec.class_center_scale, size=(c, spec.feature_dim))
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape != (c, spec.feature_dim):
        raise GenSpecError(f"class centers must have shape {(c, spec.feature_dim)}")

    labels = np.arange(n) % c
    labels = labels[wiring_rng.permutation(n)]
    h_target = sample_homophily_targets(spec, n, wiring_rng)
    edges = _wire(labels, h_target, math.ceil(spec.mean_degree), wiring_rng)

    features = centers[labels] + noise_rng.normal(0.0, spec.feature_noise_sigma,
                                                  size=(n, spec.feature_dim))
    return from_edges(n, edges, features, labels, num_classes=c, name=spec.name)


def generate_pair(source_spec: GenSpec, target_spec: GenSpec) -> tuple[Graph, Graph]:
    """Source and target graphs sharing class centers, with independent wiring and noise."""
    if source_spec.num_classes != target_spec.num_classes:
        raise GenSpecError("source and target must share num_classes")
    if source_spec.feature_dim != target_spec.feature_dim:
        raise GenSpecError("source and target must share feature_dim")
    centers = class_centers(source_spec, SOURCE_DOMAIN)
    source = generate(source_spec, centers, SOURCE_DOMAIN)
    target = generate(target_spec, centers, TARGET_DOMAIN)
    return source, target
