"""Source ANN: construction, threshold-ReLU forward pass, backprop and SGD."""

from __future__ import annotations

import copy
import logging
import re
from dataclasses import asdict, dataclass, field
from math import prod, sqrt

import numpy as np

from . import numerics as nx
from .dataset import Dataset, require_nonempty
from .errors import ConfigurationError, DataError, DimensionError
from .layers import (
    AvgPool, Conv2d, Dense, Dropout, activate, activation_grad, infer_shapes, is_weighted,
    threshold_relu,
)
from .parallel import map_chunks

log = logging.getLogger(__name__)

__all__ = [
    "AnnModel", "TrainConfig", "build_ann", "threshold_relu", "ann_forward", "forward_batch",
    "loss_and_grads", "sgd_train", "evaluate_accuracy", "predict",
]


@dataclass
class AnnModel:
    layers: list
    input_shape: tuple[int, ...]

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.shapes = infer_shapes(self.layers, self.input_shape)
        if not any(is_weighted(layer) for layer in self.layers):
            raise ConfigurationError("a model needs at least one weighted layer")

    @property
    def weighted_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if is_weighted(layer)]

    @property
    def num_weighted(self) -> int:
        return len(self.weighted_indices)

    @property
    def num_outputs(self) -> int:
        return prod(self.shapes[-1])

    def copy(self) -> "AnnModel":
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 30
    batch_size: int = 128
    lr_decay_epochs: list[int] = field(default_factory=lambda: [18, 24, 27])
    lr_decay_factor: float = 0.1
    threshold_warmup_epochs: int | None = None  # None: 10% of epochs
    seed: int = 0

    def __post_init__(self):
        if self.threshold_warmup_epochs is None:
            self.threshold_warmup_epochs = int(0.1 * self.epochs)
        checks = [
            (self.learning_rate >= 0, "learning_rate must be >= 0"),
            (0 <= self.momentum < 1, "momentum must lie in [0, 1)"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (0 < self.lr_decay_factor < 1, "lr_decay_factor must lie in (0, 1)"),
            (self.threshold_warmup_epochs >= 0, "threshold_warmup_epochs must be >= 0"),
            (0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer"),
            (all(a < b for a, b in zip(self.lr_decay_epochs, self.lr_decay_epochs[1:])),
             "lr_decay_epochs must be strictly increasing"),
            (all(e <= self.epochs for e in self.lr_decay_epochs), "lr_decay_epochs must be <= epochs"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(f"TrainConfig: {message}")

    def learning_rate_at(self, epoch: int) -> float:
        drops = sum(1 for e in self.lr_decay_epochs if e <= epoch)
        return self.learning_rate * self.lr_decay_factor ** drops

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

_TOKEN = re.compile(r"^(?:(\d+)C(\d+)(?:S(\d+))?|AP(\d+)|(\d+)FC|D(0?\.\d+|0))$")


def build_ann(arch: str, input_shape, activation: str = "threshold_relu", y_th: float = 1.0,
              seed: int = 0) -> AnnModel:
    """Build a freshly initialized model from a compact architecture string.

    Tokens are separated by ``-``: ``32C3`` is a 3x3 convolution with 32 output
    channels and 'same' zero padding (``32C3S2`` sets stride 2), ``AP2`` a 2x2
    average pool with stride 2, ``100FC`` a dense layer, ``D0.2`` dropout.
    Every weighted layer but the last uses ``activation``; the last is linear.

    Weights are drawn from N(0, 2 / (k^2 n)) with k the kernel size (1 for
    dense) and n the number of output units; biases start at zero.
    """
    rng = np.random.default_rng(seed)
    tokens = [t for t in arch.replace(" ", "").split("-") if t]
    if not tokens:
        raise ConfigurationError("empty architecture string")
    shape = tuple(input_shape)
    layers = []
    for tok in tokens:
        m = _TOKEN.match(tok)
        if m is None:
            raise ConfigurationError(f"cannot parse architecture token {tok!r}")
        conv_oc, conv_k, conv_s, pool_k, fc_n, drop_p = m.groups()
        if conv_oc:
            oc, k, s = int(conv_oc), int(conv_k), int(conv_s or 1)
            if len(shape) != 3:
                raise ConfigurationError(f"{tok}: convolution needs a (c, h, w) input, have {shape}")
            std = sqrt(2.0 / (k * k * oc))
            layer = Conv2d(rng.normal(0.0, std, (oc, shape[0], k, k)), np.zeros(oc),
                           stride=s, padding=k // 2)
        elif pool_k:
            layer = AvgPool(int(pool_k), int(pool_k))
        elif fc_n:
            n = int(fc_n)
            std = sqrt(2.0 / n)
            layer = Dense(rng.normal(0.0, std, (n, prod(shape))), np.zeros(n))
        else:
            layer = Dropout(float(drop_p))
        shape = layer.output_shape(shape)
        layers.append(layer)
    weighted = [layer for layer in layers if is_weighted(layer)]
    if not weighted:
        raise ConfigurationError("architecture has no weighted layer")
    for layer in weighted[:-1]:
        layer.activation = activation
        layer.y_th = y_th if activation == "threshold_relu" else None
    return AnnModel(layers, input_shape)


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------

def _check_input(model: AnnModel, X: np.ndarray) -> None:
    if tuple(X.shape[1:]) != model.input_shape:
        raise DimensionError(f"input shape {tuple(X.shape[1:])} does not match model input {model.input_shape}")


def weighted_preactivation(layer, X: np.ndarray) -> np.ndarray:
    """``W x + b`` of a weighted layer on a batch (dense flattens its input)."""
    if isinstance(layer, Dense):
        return nx.affine_batch(layer.weight, layer.bias, X.reshape(len(X), -1))
    return nx.conv2d_batch(layer.kernel, layer.bias, X, layer.stride, layer.padding)


def passive_forward(layer, X: np.ndarray) -> np.ndarray:
    """Inference-time pass through a layer without parameters."""
    if isinstance(layer, AvgPool):
        return nx.avgpool_batch(X, layer.k, layer.stride)
    return X  # dropout is the identity at inference


def _forward(model, X, *, use_threshold=True, training=False, rng=None, cache=None, record=False):
    acts = [] if record else None
    h = X
    for layer in model.layers:
        if cache is not None:
            cache.append({"x": h})
        if is_weighted(layer):
            z = weighted_preactivation(layer, h)
            h = activate(z, layer.activation, layer.y_th, use_threshold)
            if cache is not None:
                cache[-1]["z"] = z
            if record:
                acts.append(h)
        elif isinstance(layer, Dropout) and training and layer.p > 0:
            mask = (rng.random(h.shape) >= layer.p) / (1.0 - layer.p)
            if cache is not None:
                cache[-1]["mask"] = mask
            h = h * mask
        else:
            h = passive_forward(layer, h)
    return h, acts


def forward_batch(model: AnnModel, X, record: bool = False):
    """Inference on a batch: logits (N, C) and, if ``record``, the per-weighted-layer activations."""
    X = nx.as_tensor(X)
    _check_input(model, X)
    out, acts = _forward(model, X, record=record)
    return out.reshape(len(X), -1), acts


def ann_forward(model: AnnModel, x, record: bool = False):
    X = nx.as_tensor(x)[None]
    logits, acts = forward_batch(model, X, record)
    return logits[0], ([a[0] for a in acts] if record else None)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - log_norm
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def loss_and_grads(model: AnnModel, batch, use_threshold: bool = True, rng=None):
    """Mean softmax cross-entropy of ``batch = (inputs, labels)`` and its gradients.

    Returns ``(loss, grads)`` where ``grads[i]`` is ``(d_weight, d_bias)`` for
    weighted layer ``i`` of ``model.layers`` and ``None`` elsewhere.  Dropout
    is only active when an ``rng`` is supplied.
    """
    inputs, labels = batch
    X = nx.as_tensor(inputs)
    labels = np.asarray(labels, dtype=np.int64)
    _check_input(model, X)
    n_classes = model.num_outputs
    if len(labels) != len(X) or len(labels) == 0:
        raise DataError(f"batch has {len(X)} inputs and {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DataError(f"labels must lie in [0, {n_classes})")

    cache = []
    out, _ = _forward(model, X, use_threshold=use_threshold, training=rng is not None,
                      rng=rng, cache=cache)
    loss, grad = _cross_entropy(out.reshape(len(X), -1), labels)
    grad = grad.reshape(out.shape)

    grads = [None] * len(model.layers)
    for i in reversed(range(len(model.layers))):
        layer, c = model.layers[i], cache[i]
        if isinstance(layer, Dense):
            grad = grad * activation_grad(c["z"], layer.activation, layer.y_th, use_threshold)
            flat = c["x"].reshape(len(X), -1)
            dx, dw, db = nx.affine_backward(layer.weight, flat, grad)
            grads[i] = (dw, db)
            grad = dx.reshape(c["x"].shape)
        elif isinstance(layer, Conv2d):
            grad = grad * activation_grad(c["z"], layer.activation, layer.y_th, use_threshold)
            dx, dk, db = nx.conv2d_backward(layer.kernel, c["x"], grad, layer.stride, layer.padding)
            grads[i] = (dk, db)
            grad = dx
        elif isinstance(layer, AvgPool):
            grad = nx.avgpool_backward(c["x"].shape, grad, layer.k, layer.stride)
        elif "mask" in c:
            grad = grad * c["mask"]
    return loss, grads


# --------------------------------------------------------------------------
# training and evaluation
# --------------------------------------------------------------------------

def sgd_train(model: AnnModel, dataset: Dataset, cfg: TrainConfig, progress=None):
    """Momentum SGD on softmax cross-entropy.

    Threshold-ReLU layers behave as plain ReLU for the first
    ``cfg.threshold_warmup_epochs`` epochs.  The input model is left untouched;
    returns ``(trained_model, per_epoch_mean_loss)``.
    """
    require_nonempty(dataset)
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    velocity = {i: (np.zeros_like(model.layers[i].weight), np.zeros_like(model.layers[i].bias))
                for i in model.weighted_indices}
    history = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate_at(epoch)
        use_threshold = epoch >= cfg.threshold_warmup_epochs
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, (dataset.inputs[idx], dataset.labels[idx]),
                                         use_threshold=use_threshold, rng=rng)
            total += loss * len(idx)
            for i, (vw, vb) in velocity.items():
                layer = model.layers[i]
                gw = grads[i][0] + cfg.weight_decay * layer.weight
                gb = grads[i][1] + cfg.weight_decay * layer.bias
                vw *= cfg.momentum
                vw += gw
                vb *= cfg.momentum
                vb += gb
                layer.weight -= lr * vw
                layer.bias -= lr * vb
        history.append(total / n)
        log.info("epoch %d  lr %.4g  threshold %s  loss %.5f", epoch, lr, use_threshold, history[-1])
        if progress is not None:
            progress(epoch, history[-1])
    return model, history


def predict(model: AnnModel, X, threads: int | None = None) -> np.ndarray:
    """Argmax class per sample; ties go to the lowest index."""
    X = nx.as_tensor(X)
    parts = map_chunks(lambda s: np.argmax(forward_batch(model, X[s])[0], axis=1), len(X), threads)
    return np.concatenate(parts)


def evaluate_accuracy(model: AnnModel, dataset: Dataset, threads: int | None = None) -> float:
    require_nonempty(dataset)
    correct = int(np.sum(predict(model, dataset.inputs, threads) == dataset.labels))
    return correct / len(dataset)


def count_kink_adjacent(model: AnnModel, X, tol: float = 1e-6) -> int:
    """Number of pre-activations within ``tol`` of a ReLU or threshold kink."""
    cache = []
    _forward(model, nx.as_tensor(X), cache=cache)
    hits = 0
    for layer, c in zip(model.layers, cache):
        if is_weighted(layer) and layer.activation != "none":
            z = c["z"]
            near = np.abs(z) < tol
            if layer.activation == "threshold_relu":
                near |= np.abs(z - layer.y_th) < tol
            hits += int(near.sum())
    return hits
