"""Three-channel filter network and its training objective.

Channel ``L`` propagates with the normalized adjacency (low-pass), ``F`` with
the identity (all-pass) and ``H`` with the normalized Laplacian (high-pass).
Every layer computes ``relu(gain_c * Op_c @ H @ W)``, with one learnable gain
per channel. Channel embeddings are summed and fed to one linear classifier
shared by both domains.
"""

from __future__ import annotations

import weakref
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import Graph, normalized_adjacency, normalized_laplacian

CHANNELS = ("L", "F", "H")


class ConfigError(ValueError):
    pass


@dataclass
class HgdaConfig:
    hidden_dims: tuple = (128, 16)
    dropout_p: float = 0.5
    channels_enabled: tuple = CHANNELS
    alpha: float = 0.1
    beta: float = 0.1
    align_weight: float = 1.0
    lr: float = 5e-4
    weight_decay: float = 1e-4
    epochs: int = 200
    seed: int = 0
    track_accuracy: bool = True

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        enabled = set(self.channels_enabled)
        self.channels_enabled = tuple(c for c in CHANNELS if c in enabled)
        unknown = enabled - set(CHANNELS)
        if unknown:
            raise ConfigError(f"unknown channels {sorted(unknown)}; choose from {CHANNELS}")
        self.validate()

    def validate(self) -> None:
        if not self.channels_enabled:
            raise ConfigError("at least one channel must be enabled")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ConfigError("hidden_dims must be a non-empty list of positive widths")
        if self.alpha < 0 or self.beta < 0 or self.align_weight < 0:
            raise ConfigError("alpha, beta and align_weight must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["channels_enabled"] = list(self.channels_enabled)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HgdaConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


_OPERATOR_CACHE: "weakref.WeakKeyDictionary[Graph, dict]" = weakref.WeakKeyDictionary()


def graph_operators(g: Graph) -> dict:
    """Normalized adjacency and Laplacian of ``g``, computed once per graph object."""
    ops = _OPERATOR_CACHE.get(g)
    if ops is None:
        ops = {"L": normalized_adjacency(g), "F": None, "H": normalized_laplacian(g)}
        _OPERATOR_CACHE[g] = ops
    return ops


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class HgdaModel:
    in_dim: int
    num_classes: int
    hidden_dims: tuple
    channels: tuple
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, in_dim: int, num_classes: int, cfg: HgdaConfig,
             rng: np.random.Generator | None = None) -> "HgdaModel":
        if rng is None:
            rng = np.random.Generator(np.random.PCG64(cfg.seed))
        model = cls(in_dim, num_classes, cfg.hidden_dims, cfg.channels_enabled)
        dims = (in_dim,) + cfg.hidden_dims
        for c in model.channels:
            for layer in range(len(cfg.hidden_dims)):
                model._add(f"{c}.W{layer}", glorot_uniform(rng, dims[layer], dims[layer + 1]))
            model._add(f"alpha.{c}", np.ones((1, 1)))
        model._add("clf.W", glorot_uniform(rng, dims[-1], num_classes))
        model._add("clf.b", np.zeros((1, num_classes)))
        return model

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True, name=name)

    @property
    def embedding_dim(self) -> int:
        return self.hidden_dims[-1]

    def weights(self, channel: str) -> list[Tensor]:
        return [self.params[f"{channel}.W{i}"] for i in range(len(self.hidden_dims))]

    def gain(self, channel: str) -> Tensor:
        return self.params[f"alpha.{channel}"]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"checkpoint lacks tensors {sorted(missing)}")
        for k, p in self.params.items():
            value = np.asarray(arrays[k], dtype=np.float64)
            if value.shape != p.data.shape:
                raise ValueError(f"tensor {k}: shape {value.shape} != {p.data.shape}")
            p.data = value.copy()


def _propagate(op, h: Tensor) -> Tensor:
    if op is None:
        return h
    return ad.spmm(op, h, symmetric=True)


def forward_channel(channel: str, g: Graph, model: HgdaModel, training: bool = False,
                    dropout_p: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    if channel not in model.channels:
        raise ValueError(f"channel {channel!r} is not enabled in this model")
    if g.feature_dim != model.in_dim:
        raise ValueError(f"graph has {g.feature_dim} features, model expects {model.in_dim}")
    op = graph_operators(g)[channel]
    gain = model.gain(channel)
    weights = model.weights(channel)
    h = Tensor(g.features)
    for i, w in enumerate(weights):
        # propagate on whichever side of W is narrower
        if w.shape[1] < w.shape[0]:
            pre = _propagate(op, h @ w)
        else:
            pre = _propagate(op, h) @ w
        h = ad.relu(ad.scalar_mul(pre, gain))
        if i < len(weights) - 1:
            h = ad.dropout(h, dropout_p, training, rng)
    return h


@dataclass
class ForwardOutput:
    channel_embeddings: dict
    embedding: Tensor
    logits: Tensor


def forward(g: Graph, model: HgdaModel, training: bool = False, dropout_p: float = 0.0,
            rng: np.random.Generator | None = None) -> ForwardOutput:
    zs = {c: forward_channel(c, g, model, training, dropout_p, rng) for c in model.channels}
    z = None
    for c in model.channels:
        z = zs[c] if z is None else ad.add(z, zs[c])
    logits = ad.add(z @ model.params["clf.W"], model.params["clf.b"])
    return ForwardOutput(zs, z, logits)


def alignment_loss(source_out: ForwardOutput, target_out: ForwardOutput) -> Tensor:
    """Sum over enabled channels of KL(source embedding || target embedding)."""
    total = None
    for c, zs in source_out.channel_embeddings.items():
        term = ad.gaussian_kl(zs, target_out.channel_embeddings[c])
        total = term if total is None else ad.add(total, term)
    return total


@dataclass
class LossBreakdown:
    total: Tensor
    loss_H: float
    loss_S: float
    loss_T: float
    source_out: ForwardOutput
    target_out: ForwardOutput

    def components(self) -> dict:
        return {"loss_total": self.total.item(), "loss_H": self.loss_H,
                "loss_S": self.loss_S, "loss_T": self.loss_T}


def total_loss(source: Graph, target: Graph, model: HgdaModel, cfg: HgdaConfig,
               training: bool = False, rng: np.random.Generator | None = None) -> LossBreakdown:
    """align_weight * alignment + alpha * source cross-entropy + beta * target entropy."""
    if not source.is_fully_labeled():
        raise ValueError("source must be labeled")
    p = cfg.dropout_p
    src = forward(source, model, training, p, rng)
    tgt = forward(target, model, training, p, rng)
    l_h = alignment_loss(src, tgt)
    l_s = ad.cross_entropy(src.logits, source.labels)
    l_t = ad.mean_entropy(tgt.logits)
    for name, t in (("loss_H", l_h), ("loss_S", l_s), ("loss_T", l_t)):
        ad.check_finite(t, name)
    total = ad.add(ad.add(ad.scalar_mul(l_h, cfg.align_weight), ad.scalar_mul(l_s, cfg.alpha)),
                   ad.scalar_mul(l_t, cfg.beta))
    return LossBreakdown(total, l_h.item(), l_s.item(), l_t.item(), src, tgt)
