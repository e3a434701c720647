"""Mixture density network: Gaussian-mixture head on a tanh backbone.

The head emits ``3K`` pre-activations laid out as ``[logits | log-scale | means]``.
Mixing weights go through a softmax, scales through ``sigma_floor + exp(.)``
and means are linear.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import distributions as dist
from .dataset import Dataset, Standardizer, fit_standardizer
from .mixture import LOG_SQRT_2PI, GaussianMixture
from .neuralnet import DenseLayer, Network, TrainConfig, backward, fit_loop, forward, glorot_layer, holdout

# NLL spikes when a component briefly narrows; clip unless the config says otherwise
DEFAULT_CLIP_NORM = 10.0


@dataclass
class MdnModel:
    backbone: Network
    head: DenseLayer
    K: int
    sigma_floor: float = 1e-3
    standardizer: Optional[Standardizer] = None
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")
        if not self.sigma_floor > 0:
            raise ValueError(f"sigma_floor must be positive, got {self.sigma_floor}")
        if self.head.n_in != self.backbone.n_out or self.head.n_out != 3 * self.K:
            raise ValueError(
                f"head shape {self.head.weights.shape} does not fit backbone width "
                f"{self.backbone.n_out} and K={self.K}"
            )
        if self.head.activation != "identity":
            raise ValueError("the mixture head must have identity activation")

    @property
    def h(self) -> int:
        return self.backbone.n_in

    def parameters(self) -> list[np.ndarray]:
        return self.backbone.parameters() + [self.head.weights, self.head.bias]

    def copy(self) -> "MdnModel":
        return MdnModel(
            self.backbone.copy(),
            DenseLayer(self.head.weights.copy(), self.head.bias.copy(), "identity"),
            self.K,
            self.sigma_floor,
            self.standardizer,
        )

    def to_dict(self) -> dict:
        std = self.standardizer or Standardizer.identity(self.h)
        return {
            "h": self.h,
            "standardizer": std.to_dict(),
            "layers": self.backbone.to_list(),
            "head": {
                "type": "mdn",
                "K": self.K,
                "sigma_floor": self.sigma_floor,
                "weights": self.head.weights.ravel().tolist(),
                "bias": self.head.bias.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "MdnModel":
        head = data["head"]
        if not isinstance(head, dict) or head.get("type") != "mdn":
            raise ValueError(f"not a mixture density model: head={head!r}")
        backbone = Network.from_list(data["layers"])
        w = np.array(head["weights"], dtype=np.float64).reshape(3 * head["K"], backbone.n_out)
        return cls(
            backbone,
            DenseLayer(w, np.array(head["bias"], dtype=np.float64), "identity"),
            head["K"],
            head["sigma_floor"],
            Standardizer.from_dict(data["standardizer"]),
        )


def build(
    h: int,
    K: int = 3,
    hidden: Sequence[int] = (32, 32),
    sigma_floor: float = 1e-3,
    rng: Optional[np.random.Generator] = None,
    activation: str = "tanh",
) -> MdnModel:
    if not hidden:
        raise ValueError("the backbone needs at least one hidden layer")
    rng = rng if rng is not None else np.random.default_rng(0)
    sizes = [h, *hidden]
    backbone = Network([glorot_layer(a, b, activation, rng) for a, b in zip(sizes, sizes[1:])])
    head = glorot_layer(hidden[-1], 3 * K, "identity", rng)
    return MdnModel(backbone, head, K, sigma_floor)


def init_head_bias(model: MdnModel, labels: np.ndarray) -> None:
    """Spread component means over label quantiles and start scales at the label std."""
    K = model.K
    q = np.quantile(labels, np.arange(1, K + 1) / (K + 1))
    s = max(float(np.std(labels)), 2 * model.sigma_floor)
    model.head.bias[:K] = 0.0
    model.head.bias[K : 2 * K] = math.log(s)
    model.head.bias[2 * K :] = q


def _head_outputs(model: MdnModel, x: np.ndarray):
    hidden, cache = forward(model.backbone, x)
    if hidden.ndim == 1:
        hidden = hidden[None, :]
    a = hidden @ model.head.weights.T + model.head.bias
    return hidden, cache, a


def _split(model: MdnModel, a: np.ndarray):
    K = model.K
    logits, a_sigma, mu = a[:, :K], a[:, K : 2 * K], a[:, 2 * K :]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_pi = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    exp_s = np.exp(a_sigma)
    sigma = model.sigma_floor + exp_s
    return log_pi, exp_s, sigma, mu


def mixture_params(model: MdnModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch ``(weights, means, stds)``, each of shape (n, K), for standardized ``x``."""
    x = np.asarray(x, dtype=np.float64)
    _, _, a = _head_outputs(model, x)
    log_pi, _, sigma, mu = _split(model, a)
    pi = np.exp(log_pi)
    # keep every weight strictly positive after underflow
    pi = np.maximum(pi, 1e-300)
    pi /= pi.sum(axis=1, keepdims=True)
    return pi, mu, sigma


def mdn_forward(model: MdnModel, x: np.ndarray) -> GaussianMixture:
    """Mixture for a single standardized input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single input vector, got shape {x.shape}")
    pi, mu, sigma = mixture_params(model, x)
    return GaussianMixture(tuple(pi[0]), tuple(mu[0]), tuple(sigma[0]))


def _log_components(log_pi, sigma, mu, y):
    z = (y[:, None] - mu) / sigma
    return log_pi - np.log(sigma) - LOG_SQRT_2PI - 0.5 * z * z


def _logsumexp(t: np.ndarray) -> np.ndarray:
    top = t.max(axis=1, keepdims=True)
    return top[:, 0] + np.log(np.exp(t - top).sum(axis=1))


def sample_nll(model: MdnModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _, _, a = _head_outputs(model, np.asarray(x, dtype=np.float64))
    log_pi, _, sigma, mu = _split(model, a)
    return -_logsumexp(_log_components(log_pi, sigma, mu, np.asarray(y, dtype=np.float64)))


def nll_loss(model: MdnModel, x: np.ndarray, y: np.ndarray) -> float:
    """Summed negative log-likelihood of labels ``y`` given standardized inputs ``x``."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if len(y) == 0:
        raise ValueError("empty batch")
    return float(np.sum(sample_nll(model, x, y)))


def responsibilities(model: MdnModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _, _, a = _head_outputs(model, np.asarray(x, dtype=np.float64))
    log_pi, _, sigma, mu = _split(model, a)
    t = _log_components(log_pi, sigma, mu, np.asarray(y, dtype=np.float64))
    return np.exp(t - _logsumexp(t)[:, None])


def mdn_backward(model: MdnModel, x: np.ndarray, y: np.ndarray, scale: float = 1.0):
    """Summed NLL (times ``scale``) and its gradients aligned to ``model.parameters()``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    hidden, cache, a = _head_outputs(model, x)
    log_pi, exp_s, sigma, mu = _split(model, a)
    t = _log_components(log_pi, sigma, mu, y)
    lse = _logsumexp(t)
    gamma = np.exp(t - lse[:, None])
    pi = np.exp(log_pi)
    r2 = ((y[:, None] - mu) / sigma) ** 2
    d_logits = pi - gamma
    d_sigma = gamma * (1.0 - r2) * exp_s / sigma
    d_mu = gamma * (mu - y[:, None]) / sigma**2
    d_a = scale * np.hstack([d_logits, d_sigma, d_mu])
    d_head_w = d_a.T @ hidden
    d_head_b = d_a.sum(axis=0)
    d_hidden = d_a @ model.head.weights
    grads, _ = backward(model.backbone, cache, d_hidden)
    return scale * float(-lse.sum()), grads + [d_head_w, d_head_b]


def train_mdn(
    model: MdnModel,
    train: Dataset,
    val: Optional[Dataset],
    cfg: TrainConfig,
    pin_sigma: bool = False,
) -> tuple[MdnModel, dict]:
    """Minibatch Adam on mean NLL with early stopping; inputs must already be standardized.

    With ``pin_sigma`` the scale outputs are frozen at their current bias.
    Gradients are clipped at ``cfg.clip_norm``, or ``DEFAULT_CLIP_NORM`` when unset.
    """
    if cfg.clip_norm is None:
        cfg = dataclasses.replace(cfg, clip_norm=DEFAULT_CLIP_NORM)
    train, val = holdout(train, val, cfg)
    model = model.copy()
    params = model.parameters()
    K = model.K
    if pin_sigma:
        model.head.weights[K : 2 * K] = 0.0
    x, y = train.features, train.labels

    def loss_and_grads(idx):
        loss, grads = mdn_backward(model, x[idx], y[idx], scale=1.0 / len(idx))
        if pin_sigma:
            grads[-2][K : 2 * K] = 0.0
            grads[-1][K : 2 * K] = 0.0
        return loss, grads

    def val_loss():
        return nll_loss(model, val.features, val.labels) / len(val)

    def snapshot():
        return [p.copy() for p in params]

    def restore(saved):
        for p, s in zip(params, saved):
            p[...] = s

    history = fit_loop(params, loss_and_grads, val_loss, len(train), cfg, snapshot, restore)
    return model, history


def fit_mdn_model(
    train: Dataset,
    cfg: TrainConfig,
    K: int = 3,
    hidden: Sequence[int] = (32, 32),
    sigma_floor: float = 1e-3,
    standardize: bool = True,
    val: Optional[Dataset] = None,
) -> MdnModel:
    """Build, initialise, standardize and train an MDN on raw delay histories."""
    train, val = holdout(train, val, cfg)
    std = fit_standardizer(train) if standardize else Standardizer.identity(train.h)
    rng = dist.RandomStream(cfg.seed, dist.WEIGHT_INIT).generator
    model = build(train.h, K, hidden, sigma_floor, rng)
    init_head_bias(model, train.labels)
    model, history = train_mdn(model, std.apply(train), std.apply(val), cfg)
    model.standardizer = std
    model.history = history
    return model


def _standardize(model: MdnModel, features: np.ndarray) -> np.ndarray:
    if model.standardizer is None:
        return np.asarray(features, dtype=np.float64)
    return model.standardizer.transform(features)


def predict_distribution(model: MdnModel, features: np.ndarray) -> GaussianMixture:
    """Predicted delay distribution for one raw delay-history vector."""
    return mdn_forward(model, _standardize(model, features))


def predict_distributions(model: MdnModel, features: np.ndarray) -> list[GaussianMixture]:
    pi, mu, sigma = mixture_params(model, _standardize(model, features))
    return [GaussianMixture(tuple(p), tuple(m), tuple(s)) for p, m, s in zip(pi, mu, sigma)]


def predict_mmse(model: MdnModel, features: np.ndarray) -> np.ndarray:
    """Mixture means; scalar for one vector, array for a batch."""
    pi, mu, _ = mixture_params(model, _standardize(model, features))
    out = np.sum(pi * mu, axis=1)
    return out[0] if np.ndim(features) == 1 else out
