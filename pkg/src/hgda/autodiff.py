"""Dense 2-D reverse-mode autodiff, the training losses and Adam.

Every value is a float64 matrix; scalars are 1x1. Each op returns a new
``Tensor`` that remembers its parents and a closure pushing the upstream
gradient into them. ``backward`` walks the graph in reverse topological order.
Gradients accumulate until ``zero_grad`` is called.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

VARIANCE_FLOOR = 1e-5


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = ()):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, other):
        return scalar_mul(self, other)

    __rmul__ = __mul__


def _result(data, parents, backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=parents if needs else ())
    if needs:
        out._backward = backward_fn
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    upstream = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = upstream.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node._accumulate(g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in upstream:
                upstream[key] = upstream[key] + pg
            else:
                upstream[key] = pg


# ---------------------------------------------------------------- elementary ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _result(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def spmm(op: sp.spmatrix, x: Tensor, symmetric: bool = False) -> Tensor:
    """Constant sparse operator times a tensor."""
    if op.shape[1] != x.shape[0]:
        raise ValueError(f"spmm shape mismatch {op.shape} @ {x.shape}")
    op_t = op if symmetric else op.T.tocsr()
    return _result(np.asarray(op @ x.data), (x,), lambda g: (np.asarray(op_t @ g),))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1 x cols row broadcast over rows."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _result(a.data + b.data, (a, b), lambda g: (g, g))
    if b.shape == (1, a.shape[1]):
        return _result(a.data + b.data, (a, b),
                       lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise ValueError(f"add shape mismatch {a.shape} + {b.shape}")


def scalar_mul(x: Tensor, s) -> Tensor:
    """Multiply by a scalar; ``s`` is either a Python number or a 1x1 tensor."""
    x = as_tensor(x)
    if not isinstance(s, Tensor):
        c = float(s)
        return _result(x.data * c, (x,), lambda g: (g * c,))
    if s.shape != (1, 1):
        raise ValueError(f"scalar_mul needs a 1x1 scale, got {s.shape}")
    return _result(x.data * s.data[0, 0], (x, s),
                   lambda g: (g * s.data[0, 0], np.sum(g * x.data).reshape(1, 1)))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity outside training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    scale = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * scale, (x,), lambda g: (g * scale,))


def sum_all(x: Tensor) -> Tensor:
    return _result(np.array([[x.data.sum()]]), (x,),
                   lambda g: (np.full(x.shape, g[0, 0]),))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_rows(x: Tensor) -> Tensor:
    p = np.exp(_log_softmax(x.data))

    def back(g):
        return (p * (g - np.sum(g * p, axis=1, keepdims=True)),)

    return _result(p, (x,), back)


# ---------------------------------------------------------------- losses

def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels``."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    logp = _log_softmax(logits.data)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def back(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (g[0, 0] / n),)

    return _result(np.array([[loss]]), (logits,), back)


def mean_entropy(logits: Tensor) -> Tensor:
    """Mean Shannon entropy (nats) of the row-wise softmax."""
    n = logits.shape[0]
    logp = _log_softmax(logits.data)
    p = np.exp(logp)
    ent = -(p * logp).sum(axis=1, keepdims=True)

    def back(g):
        return (-p * (logp + ent) * (g[0, 0] / n),)

    return _result(np.array([[ent.mean()]]), (logits,), back)


def _moments(z: np.ndarray):
    mu = z.mean(axis=0)
    raw = ((z - mu) ** 2).mean(axis=0)
    floored = raw < VARIANCE_FLOOR
    return mu, np.where(floored, VARIANCE_FLOOR, raw), floored


def gaussian_kl(zs: Tensor, zt: Tensor) -> Tensor:
    """KL(source || target) between diagonal Gaussians fitted to two row batches.

    Per-column population mean and variance; variances are floored at
    ``VARIANCE_FLOOR`` and the floor blocks the gradient through the variance.
    """
    ns, m = zs.shape
    nt = zt.shape[0]
    if ns < 2 or nt < 2:
        raise ValueError("gaussian_kl needs at least two rows per batch")
    if zt.shape[1] != m:
        raise ValueError(f"embedding widths differ: {m} vs {zt.shape[1]}")
    mu_s, var_s, fl_s = _moments(zs.data)
    mu_t, var_t, fl_t = _moments(zt.data)
    diff = mu_s - mu_t
    kl = 0.5 * np.log(var_t / var_s) + (var_s + diff ** 2) / (2.0 * var_t) - 0.5
    value = float(kl.sum())

    def back(g):
        scale = g[0, 0]
        d_mu_s = diff / var_t
        d_var_s = np.where(fl_s, 0.0, 0.5 / var_t - 0.5 / var_s)
        d_mu_t = -d_mu_s
        d_var_t = np.where(fl_t, 0.0, 0.5 / var_t - (var_s + diff ** 2) / (2.0 * var_t ** 2))
        gs = (d_mu_s / ns + d_var_s * 2.0 * (zs.data - mu_s) / ns) * scale
        gt = (d_mu_t / nt + d_var_t * 2.0 * (zt.data - mu_t) / nt) * scale
        return gs, gt

    return _result(np.array([[value]]), (zs, zt), back)


def check_finite(t: Tensor, what: str) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NonFiniteError(f"{what} is not finite")


# ---------------------------------------------------------------- optimizer

class Adam:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "weight_decay": self.weight_decay, "t": self.t,
                "m": {k: _encode(v) for k, v in sorted(self.m.items())},
                "v": {k: _encode(v) for k, v in sorted(self.v.items())}}

    def load_state_dict(self, state: dict) -> None:
        for key in ("lr", "beta1", "beta2", "eps", "weight_decay"):
            setattr(self, key, float(state[key]))
        self.t = int(state["t"])
        self.m = {k: _decode(v) for k, v in state["m"].items()}
        self.v = {k: _decode(v) for k, v in state["v"].items()}


def adam_step(params: dict[str, Tensor], state: Adam) -> None:
    """Apply one update using gradients already stored on ``params``."""
    state.params = params
    state.step()


# ---------------------------------------------------------------- checkpoints

def _encode(a: np.ndarray) -> dict:
    return {"shape": [int(a.shape[0]), int(a.shape[1])],
            "values": [float(x) for x in a.ravel()]}


def _decode(d: dict) -> np.ndarray:
    return np.asarray(d["values"], dtype=np.float64).reshape(d["shape"])


def save_checkpoint(path, tensors: dict[str, Tensor], adam: Adam | None = None,
                    epoch: int = 0, seed: int = 0, extra: dict | None = None) -> None:
    payload = {"tensors": {k: _encode(t.data) for k, t in sorted(tensors.items())},
               "adam": adam.state_dict() if adam is not None else {},
               "epoch": int(epoch), "seed": int(seed)}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_checkpoint(path) -> dict:
    """Returns the raw payload with ``tensors`` decoded to numpy arrays."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    payload["tensors"] = {k: _decode(v) for k, v in payload["tensors"].items()}
    return payload
