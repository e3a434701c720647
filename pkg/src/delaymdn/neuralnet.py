"""Fully-connected network with backpropagation and Adam, in float64 numpy."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import distributions as dist
from .dataset import Dataset, Standardizer, fit_standardizer

ACTIVATIONS = ("tanh", "relu", "identity")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0).astype(float)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(f"inconsistent layer shapes {self.weights.shape} and {self.bias.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def to_dict(self) -> dict:
        return {
            "rows": self.n_out,
            "cols": self.n_in,
            "weights": self.weights.ravel().tolist(),
            "bias": self.bias.tolist(),
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseLayer":
        w = np.array(data["weights"], dtype=np.float64).reshape(data["rows"], data["cols"])
        return cls(w, np.array(data["bias"], dtype=np.float64), data["activation"])


def glorot_layer(n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> DenseLayer:
    bound = math.sqrt(6.0 / (n_in + n_out))
    return DenseLayer(rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out), activation)


class Network:
    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")
        self.layers = layers

    @classmethod
    def build(
        cls,
        n_in: int,
        hidden: Sequence[int],
        n_out: int,
        rng: np.random.Generator,
        activation: str = "tanh",
        output_activation: str = "identity",
    ) -> "Network":
        sizes = [n_in, *hidden]
        layers = [glorot_layer(a, b, activation, rng) for a, b in zip(sizes, sizes[1:])]
        layers.append(glorot_layer(sizes[-1], n_out, output_activation, rng))
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> list[np.ndarray]:
        """Weight and bias arrays in layer order; updates are made in place."""
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def to_list(self) -> list[dict]:
        return [layer.to_dict() for layer in self.layers]

    @classmethod
    def from_list(cls, data: list[dict]) -> "Network":
        return cls([DenseLayer.from_dict(d) for d in data])


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Output for a batch ``x`` of shape (n, n_in), or a single vector.

    The cache holds ``(input, pre_activation, post_activation)`` per layer.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != net.n_in:
        raise ValueError(f"expected input width {net.n_in}, got shape {x.shape}")
    cache = []
    for layer in net.layers:
        z = a @ layer.weights.T + layer.bias
        out = _activate(z, layer.activation)
        cache.append((a, z, out))
        a = out
    return (a[0] if single else a), cache


def backward(net: Network, cache: list, upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of a scalar loss given ``upstream = dLoss/dOutput``.

    Returns ``(grads, grad_input)`` with ``grads`` aligned to ``net.parameters()``.
    """
    delta = np.asarray(upstream, dtype=np.float64)
    if delta.ndim == 1:
        delta = delta[None, :]
    grads: list[np.ndarray] = []
    for layer, (a_in, z, a_out) in zip(reversed(net.layers), reversed(cache)):
        dz = delta * _activation_grad(z, a_out, layer.activation)
        grads.append(dz.sum(axis=0))
        grads.append(dz.T @ a_in)
        delta = dz @ layer.weights
    grads.reverse()
    return grads, delta


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    val_fraction: float = 0.1
    seed: int = 0
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("Adam moments need 0 <= beta < 1 and eps > 0")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, cfg: TrainConfig) -> None:
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    lr_t = cfg.learning_rate * math.sqrt(1.0 - b2**state.step) / (1.0 - b1**state.step)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr_t * m / (np.sqrt(v) + cfg.eps)


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def holdout(train: Dataset, val: Optional[Dataset], cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """Validation set: ``val`` if given, otherwise the chronologically last fraction of ``train``."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    if val is not None:
        return train, val
    n_val = int(round(cfg.val_fraction * len(train)))
    if n_val == 0:
        return train, train
    return train.subset(slice(0, len(train) - n_val)), train.subset(slice(len(train) - n_val, len(train)))


def fit_loop(params, loss_and_grads, loss_only, n_train: int, cfg: TrainConfig, snapshot, restore):
    """Minibatch Adam with early stopping on validation loss.

    ``loss_and_grads(index)`` returns the mean batch loss and its gradients,
    ``loss_only()`` the validation loss. Best-validation parameters are restored
    at the end.
    """
    rng = dist.RandomStream(cfg.seed, dist.SHUFFLE).generator
    state = AdamState.like(params)
    best = loss_only()
    best_params = snapshot()
    history = {"epoch": [0], "train_loss": [math.nan], "val_loss": [best]}
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(idx)
            if cfg.clip_norm is not None:
                clip_by_global_norm(grads, cfg.clip_norm)
            adam_update(params, grads, state, cfg)
            total += loss * len(idx)
        val_loss = loss_only()
        history["epoch"].append(epoch)
        history["train_loss"].append(total / n_train)
        history["val_loss"].append(val_loss)
        if val_loss < best:
            best, best_params, stale = val_loss, snapshot(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    restore(best_params)
    return history


def mse_loss(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    out, _ = forward(net, x)
    return float(np.mean((out[:, 0] - y) ** 2))


def mse_loss_and_grads(net: Network, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    out, cache = forward(net, x)
    err = out[:, 0] - y
    grads, _ = backward(net, cache, (2.0 / len(y)) * err[:, None])
    return float(np.mean(err * err)), grads


def train_mse(net: Network, train: Dataset, val: Optional[Dataset], cfg: TrainConfig) -> tuple[Network, dict]:
    """Fit a single-output network by least squares; returns the best-validation copy."""
    if net.n_out != 1:
        raise ValueError(f"least-squares training needs one output, network has {net.n_out}")
    train, val = holdout(train, val, cfg)
    net = net.copy()
    params = net.parameters()
    x, y = train.features, train.labels

    def snapshot():
        return [p.copy() for p in params]

    def restore(saved):
        for p, s in zip(params, saved):
            p[...] = s

    history = fit_loop(
        params,
        lambda idx: mse_loss_and_grads(net, x[idx], y[idx]),
        lambda: mse_loss(net, val.features, val.labels),
        len(train),
        cfg,
        snapshot,
        restore,
    )
    return net, history


def predict(net: Network, x: np.ndarray) -> np.ndarray:
    out, _ = forward(net, x)
    return out[..., 0]


@dataclass
class MseModel:
    """Point predictor: standardizer followed by a single-output network."""

    net: Network
    standardizer: Standardizer
    history: dict = field(default_factory=dict)

    @property
    def h(self) -> int:
        return self.net.n_in

    def predict(self, features: np.ndarray) -> np.ndarray:
        return predict(self.net, self.standardizer.transform(features))

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "standardizer": self.standardizer.to_dict(),
            "layers": self.net.to_list(),
            "head": "mse",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "MseModel":
        if data.get("head") != "mse":
            raise ValueError(f"not a least-squares model: head={data.get('head')!r}")
        return cls(Network.from_list(data["layers"]), Standardizer.from_dict(data["standardizer"]))


def fit_mse_model(
    train: Dataset,
    cfg: TrainConfig,
    hidden: Sequence[int] = (32, 32),
    activation: str = "tanh",
    standardize: bool = True,
    val: Optional[Dataset] = None,
) -> MseModel:
    """Build, standardize and train a point predictor on raw delay histories."""
    train, val = holdout(train, val, cfg)
    std = fit_standardizer(train) if standardize else Standardizer.identity(train.h)
    rng = dist.RandomStream(cfg.seed, dist.WEIGHT_INIT).generator
    net = Network.build(train.h, hidden, 1, rng, activation)
    net, history = train_mse(net, std.apply(train), std.apply(val), cfg)
    return MseModel(net, std, history)
