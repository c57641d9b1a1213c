"""Feedforward classifier with swappable output heads and loss functions.

The network is a plain ReLU multi-layer perceptron trained by seeded
mini-batch gradient descent with inverted dropout. Three heads are supported:

* ``softmax`` — standard logits, trained with cross entropy or its
  label-smoothed variant;
* ``inhibited`` — softmax with a constant inhibition term ``exp(alpha)`` in
  the denominator; the final layer carries no bias and the loss adds a small
  regularizer on the true-class logit so the inhibition term stays relevant;
* ``evidential`` — non-negative evidence ``relu(logits)`` parameterizing a
  Dirichlet over class probabilities, trained with the sum-of-squares
  evidential loss plus an annealed KL penalty toward the uniform Dirichlet.

Everything is deterministic given (config, data, seed): identical inputs give
bit-identical parameters.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, polygamma

__all__ = [
    "HEADS",
    "LOSSES",
    "LearnerConfig",
    "LearnerModel",
    "TrainingDiverged",
    "train",
    "forward_logits",
    "gradient",
    "softmax_probs",
    "loss_cross_entropy",
    "loss_label_smoothing",
    "loss_inhibited",
    "loss_evidential",
    "predict",
    "accuracy",
    "save_model",
    "load_model",
]

HEADS = ("softmax", "inhibited", "evidential")
LOSSES = ("cross_entropy", "label_smoothing", "inhibited", "evidential")

_HEAD_LOSSES = {
    "softmax": ("cross_entropy", "label_smoothing"),
    "inhibited": ("inhibited",),
    "evidential": ("evidential",),
}


class TrainingDiverged(RuntimeError):
    """Raised when training produces a non-finite loss."""


@dataclass(frozen=True)
class LearnerConfig:
    """Architecture, loss, and optimization settings for one classifier."""

    hidden_sizes: tuple[int, ...] = (128,)
    dropout_rate: float = 0.1
    head: str = "softmax"
    loss: str = "cross_entropy"
    ls_alpha: float = 0.2
    is_alpha: float = 1.0
    is_lambda: float = 0.01
    evi_anneal_epochs: int = 10
    epochs: int = 100
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden layer widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss not in _HEAD_LOSSES[self.head]:
            raise ValueError(f"head {self.head!r} cannot train with loss {self.loss!r}")
        if not 0.0 < self.ls_alpha < 1.0:
            raise ValueError("ls_alpha must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class LearnerModel:
    """Trained (or freshly initialized) network parameters.

    ``biases[-1]`` is None for the inhibited head: that head is defined
    without a final-layer bias.
    """

    config: LearnerConfig
    class_count: int
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray | None] = field(repr=False)
    trained: bool = False

    @property
    def head(self) -> str:
        return self.config.head

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]


def _init_model(config: LearnerConfig, input_dim: int, class_count: int,
                rng: np.random.Generator) -> LearnerModel:
    sizes = [input_dim, *config.hidden_sizes, class_count]
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        last = i == len(sizes) - 2
        if last and config.head == "inhibited":
            biases.append(None)
        else:
            biases.append(np.zeros(fan_out))
    return LearnerModel(config=config, class_count=class_count,
                        weights=weights, biases=biases)


def _check_features(model: LearnerModel, features) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match model input {model.input_dim}")
    return x


def _forward(model: LearnerModel, x: np.ndarray,
             rng: np.random.Generator | None):
    """Forward pass keeping intermediates for backprop.

    Returns (inputs, preacts, scaled_masks, logits); ``inputs[i]`` feeds layer
    i. Dropout masks are drawn from ``rng`` (None disables dropout) and are
    already scaled by 1/(1-rate).
    """
    rate = model.config.dropout_rate
    inputs = [x]
    preacts: list[np.ndarray] = []
    masks: list[np.ndarray | None] = []
    a = x
    n_hidden = len(model.weights) - 1
    for i in range(n_hidden):
        z = a @ model.weights[i] + model.biases[i]
        preacts.append(z)
        a = np.maximum(z, 0.0)
        if rng is not None and rate > 0.0:
            mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
            a = a * mask
            masks.append(mask)
        else:
            masks.append(None)
        inputs.append(a)
    logits = a @ model.weights[-1]
    if model.biases[-1] is not None:
        logits = logits + model.biases[-1]
    return inputs, preacts, masks, logits


def forward_logits(model: LearnerModel, features, dropout_active: bool = False,
                   rng_seed: int | None = None) -> np.ndarray:
    """Pre-activation outputs for a batch; optionally with stochastic dropout.

    With ``dropout_active`` each hidden unit is zeroed independently with the
    configured dropout rate and survivors are scaled by 1/(1-rate); the same
    ``rng_seed`` reproduces the same masks.
    """
    x = _check_features(model, features)
    rng = None
    if dropout_active and model.config.dropout_rate > 0.0:
        rng = np.random.default_rng(rng_seed)
    return _forward(model, x, rng)[3]


def _one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    out = np.zeros((labels.size, class_count))
    out[np.arange(labels.size), labels] = 1.0
    return out


def softmax_probs(logits) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_cross_entropy(logits, labels) -> float:
    """Mean negative log-likelihood of the softmax probabilities."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    lse = logsumexp(z, axis=1)
    return float(np.mean(lse - z[np.arange(y.size), y]))


def _ce_grad(z, y):
    p = softmax_probs(z)
    t = _one_hot(y, z.shape[1])
    lse = logsumexp(z, axis=1)
    loss = float(np.mean(lse - z[np.arange(y.size), y]))
    return loss, (p - t) / y.size


def loss_label_smoothing(logits, labels, alpha: float) -> float:
    """Cross entropy against a smoothed target: true class 1-alpha, others alpha/(K-1)."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    k = z.shape[1]
    if k < 2:
        raise ValueError("label smoothing needs at least two classes")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    q = _smooth_targets(y, k, alpha)
    lse = logsumexp(z, axis=1)
    return float(np.mean(lse - (q * z).sum(axis=1)))


def _smooth_targets(y, k, alpha):
    q = np.full((y.size, k), alpha / (k - 1))
    q[np.arange(y.size), y] = 1.0 - alpha
    return q


def _ls_grad(z, y, alpha):
    k = z.shape[1]
    q = _smooth_targets(y, k, alpha)
    p = softmax_probs(z)
    lse = logsumexp(z, axis=1)
    loss = float(np.mean(lse - (q * z).sum(axis=1)))
    return loss, (p - q) / y.size


def loss_inhibited(logits, labels, alpha_const: float, lambda_reg: float) -> float:
    """Negative log of the inhibited-softmax true-class probability plus the
    logit regularizer ``lambda_reg * mean(true-class logit)``."""
    loss, _ = _is_grad(np.atleast_2d(np.asarray(logits, dtype=np.float64)),
                       np.asarray(labels, dtype=np.int64), alpha_const, lambda_reg)
    return loss


def _is_grad(z, y, alpha_const, lambda_reg):
    m = y.size
    rows = np.arange(m)
    # log(sum_j exp(z_j) + exp(alpha)) via an appended constant column
    aug = np.concatenate([z, np.full((m, 1), alpha_const)], axis=1)
    lse = logsumexp(aug, axis=1)
    z_true = z[rows, y]
    loss = float(np.mean(lse - z_true) + lambda_reg * np.mean(z_true))
    sigma = np.exp(z - lse[:, None])
    d = sigma.copy()
    d[rows, y] += lambda_reg - 1.0
    return loss, d / m


def _evi_quantities(z, y):
    evidence = np.maximum(z, 0.0)
    alpha = evidence + 1.0
    s = alpha.sum(axis=1, keepdims=True)
    p = alpha / s
    t = _one_hot(y, z.shape[1])
    return evidence, alpha, s, p, t


def loss_evidential(logits, labels, anneal_coef: float) -> float:
    """Sum-of-squares evidential loss plus ``anneal_coef`` times the KL of the
    misleading-evidence Dirichlet (true-class parameter clamped to 1) from the
    uniform Dirichlet."""
    loss, _ = _evi_grad(np.atleast_2d(np.asarray(logits, dtype=np.float64)),
                        np.asarray(labels, dtype=np.int64), anneal_coef)
    return loss


def _evi_grad(z, y, anneal_coef):
    m, k = z.shape
    _, alpha, s, p, t = _evi_quantities(z, y)
    s1 = s[:, 0]
    err = ((t - p) ** 2).sum(axis=1)
    var = (p * (1.0 - p)).sum(axis=1) / (s1 + 1.0)
    # KL(Dir(alpha_tilde) || Dir(1)) with the true-class parameter clamped to 1
    at = t + (1.0 - t) * alpha
    st = at.sum(axis=1)
    kl = (gammaln(st) - gammaln(k) - gammaln(at).sum(axis=1)
          + ((at - 1.0) * (digamma(at) - digamma(st)[:, None])).sum(axis=1))
    loss = float(np.mean(err + var + anneal_coef * kl))

    diff = p - t
    # d(err)/d(alpha_j) = (2/S) [diff_j - sum_i diff_i p_i]
    derr = (2.0 / s) * (diff - (diff * p).sum(axis=1, keepdims=True))
    # d(var)/d(alpha_j) = [(1-2p_j) - sum_i (1-2p_i) p_i] / (S(S+1)) - var/(S+1)
    one_m2p = 1.0 - 2.0 * p
    dvar = ((one_m2p - (one_m2p * p).sum(axis=1, keepdims=True)) / (s * (s + 1.0))
            - (var / (s1 + 1.0))[:, None])
    dkl_dat = (at - 1.0) * polygamma(1, at) - polygamma(1, st)[:, None] * (st - k)[:, None]
    dalpha = derr + dvar + anneal_coef * dkl_dat * (1.0 - t)
    return loss, dalpha * (z > 0.0) / m


def _loss_grad(model: LearnerModel, logits, labels, anneal_coef):
    cfg = model.config
    if cfg.loss == "cross_entropy":
        return _ce_grad(logits, labels)
    if cfg.loss == "label_smoothing":
        return _ls_grad(logits, labels, cfg.ls_alpha)
    if cfg.loss == "inhibited":
        return _is_grad(logits, labels, cfg.is_alpha, cfg.is_lambda)
    return _evi_grad(logits, labels, anneal_coef)


def gradient(model: LearnerModel, features, labels, anneal_coef: float = 1.0,
             dropout_rng: np.random.Generator | None = None):
    """Analytic gradient of the configured loss for one mini-batch.

    Returns (loss, weight_grads, bias_grads); bias grads are None where the
    layer has no bias. Dropout is applied only when ``dropout_rng`` is given,
    so the default is a deterministic pass suitable for gradient checking.
    """
    x = _check_features(model, features)
    y = np.asarray(labels, dtype=np.int64)
    inputs, preacts, masks, logits = _forward(model, x, dropout_rng)
    loss, delta = _loss_grad(model, logits, y, anneal_coef)
    grads_w: list[np.ndarray] = [None] * len(model.weights)
    grads_b: list[np.ndarray | None] = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = inputs[layer].T @ delta
        if model.biases[layer] is not None:
            grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            upstream = delta @ model.weights[layer].T
            if masks[layer - 1] is not None:
                upstream = upstream * masks[layer - 1]
            delta = upstream * (preacts[layer - 1] > 0.0)
    return loss, grads_w, grads_b


def train(config: LearnerConfig, ds, labeled) -> LearnerModel:
    """Train a fresh model on ``ds.features[labeled]`` for the configured epochs.

    Deterministic: the seed drives initialization, shuffling, and dropout from
    a single stream. A single-class labeled set trains with a warning; a
    non-finite loss aborts with TrainingDiverged.
    """
    idx = np.asarray(labeled, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("labeled set is empty")
    x = ds.features[idx]
    y = ds.labels[idx]
    if np.unique(y).size < 2:
        warnings.warn("training on a single-class labeled set", RuntimeWarning,
                      stacklevel=2)
    rng = np.random.default_rng(config.seed)
    model = _init_model(config, x.shape[1], ds.class_count, rng)
    use_dropout = config.dropout_rate > 0.0
    n = idx.size
    for epoch in range(config.epochs):
        if config.loss == "evidential":
            ramp = max(config.evi_anneal_epochs, 1)
            anneal = min(1.0, epoch / ramp)
        else:
            anneal = 1.0
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads_w, grads_b = gradient(
                model, x[batch], y[batch], anneal_coef=anneal,
                dropout_rng=rng if use_dropout else None)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss!r} at epoch {epoch} "
                    f"(head={config.head}, loss={config.loss}, lr={config.learning_rate})")
            for layer, gw in enumerate(grads_w):
                model.weights[layer] -= config.learning_rate * gw
                if grads_b[layer] is not None:
                    model.biases[layer] -= config.learning_rate * grads_b[layer]
    model.trained = True
    return model


def predict(model: LearnerModel, features) -> np.ndarray:
    """Most probable class per row; ties resolve to the lowest class id."""
    return np.argmax(forward_logits(model, features), axis=1)


def accuracy(model: LearnerModel, features, labels) -> float:
    return float(np.mean(predict(model, features) == np.asarray(labels)))


_CHECKPOINT_VERSION = 1


def save_model(model: LearnerModel, path) -> None:
    """Binary checkpoint (npz): exact float64 round trip of all parameters."""
    arrays = {f"w{i}": w for i, w in enumerate(model.weights)}
    for i, b in enumerate(model.biases):
        if b is not None:
            arrays[f"b{i}"] = b
    meta = {
        "version": _CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "class_count": model.class_count,
        "trained": model.trained,
        "layers": len(model.weights),
    }
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_model(path) -> LearnerModel:
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(str(blob["meta"]))
        if meta["version"] != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg_dict = dict(meta["config"])
        cfg_dict["hidden_sizes"] = tuple(cfg_dict["hidden_sizes"])
        config = LearnerConfig(**cfg_dict)
        weights = [blob[f"w{i}"] for i in range(meta["layers"])]
        biases = [blob[f"b{i}"] if f"b{i}" in blob else None
                  for i in range(meta["layers"])]
    return LearnerModel(config=config, class_count=meta["class_count"],
                        weights=weights, biases=biases, trained=meta["trained"])
