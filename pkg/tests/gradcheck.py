"""Central-difference gradient oracle shared by the unit and acceptance suites.

The oracle runs its own forward pass with plain ``np.clip`` activations and
an independent log-sum-exp cross entropy.  A parameter is skipped when
nudging it by +/- eps moves any pre-activation across a kink, since the
loss is not differentiable there.
"""

import numpy as np

from snnforge.ann import AnnModel, passive_forward, weighted_preactivation
from snnforge.layers import AvgPool, Conv2d, Dense, is_weighted

EPS = 1e-5
REL_TOL = 1e-4
GRAD_FLOOR = 1e-6


def _act(z, layer):
    if layer.activation == "relu":
        return np.maximum(z, 0.0), np.sign(z)
    if layer.activation == "threshold_relu":
        return np.clip(z, 0.0, layer.y_th), np.sign(z) + np.sign(z - layer.y_th)
    return z, np.zeros_like(z)


def oracle_loss(model: AnnModel, X, labels):
    """Mean cross entropy and the kink-side pattern of every pre-activation."""
    h = X
    pattern = []
    for layer in model.layers:
        if is_weighted(layer):
            h, side = _act(weighted_preactivation(layer, h), layer)
            pattern.append(side)
        else:
            h = passive_forward(layer, h)
    logits = h.reshape(len(X), -1)
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(len(X)), labels]))
    return loss, np.concatenate([p.ravel() for p in pattern])


def check_gradients(model: AnnModel, X, labels, analytic):
    """Compare ``analytic`` (as returned by loss_and_grads) with central differences.

    Returns ``(worst_relative_error, checked, skipped)``.
    """
    worst, checked, skipped = 0.0, 0, 0
    for i in model.weighted_indices:
        layer = model.layers[i]
        for param, grad in zip((layer.weight, layer.bias), analytic[i]):
            for idx in np.ndindex(param.shape):
                old = param[idx]
                param[idx] = old + EPS
                up, pat_up = oracle_loss(model, X, labels)
                param[idx] = old - EPS
                down, pat_down = oracle_loss(model, X, labels)
                param[idx] = old
                if not np.array_equal(pat_up, pat_down):
                    skipped += 1
                    continue
                numeric = (up - down) / (2 * EPS)
                a = grad[idx]
                # The quotient carries ~1e-16 |loss| / EPS of roundoff, so gradients below
                # GRAD_FLOOR are compared on an absolute scale of GRAD_FLOOR instead.
                err = abs(a - numeric) / max(abs(a), abs(numeric), GRAD_FLOOR)
                worst = max(worst, err)
                checked += 1
    return worst, checked, skipped


def random_small_model(rng: np.random.Generator, conv: bool) -> tuple[AnnModel, np.ndarray, np.ndarray]:
    """A random model with at most three weighted layers of width at most 8, plus a batch."""
    act = str(rng.choice(["relu", "threshold_relu"]))
    y_th = float(rng.uniform(0.5, 2.0))
    classes = int(rng.integers(2, 5))
    if conv:
        c_in, side = int(rng.integers(1, 3)), 4
        c_mid = int(rng.integers(1, 4))
        layers = [
            Conv2d(rng.normal(0, 0.8, (c_mid, c_in, 3, 3)), rng.normal(0, 0.3, c_mid), 1, 1, act, y_th),
            AvgPool(2, 2),
            Dense(rng.normal(0, 0.8, (classes, c_mid * 4)), rng.normal(0, 0.3, classes)),
        ]
        shape = (c_in, side, side)
    else:
        n_in = int(rng.integers(2, 9))
        widths = [int(w) for w in rng.integers(2, 9, size=int(rng.integers(1, 3)))]
        dims = [n_in] + widths
        layers = [Dense(rng.normal(0, 0.8, (dims[k + 1], dims[k])), rng.normal(0, 0.3, dims[k + 1]), act, y_th)
                  for k in range(len(widths))]
        layers.append(Dense(rng.normal(0, 0.8, (classes, dims[-1])), rng.normal(0, 0.3, classes)))
        shape = (n_in,)
    model = AnnModel(layers, shape)
    X = rng.normal(0, 1.0, (6, *shape))
    labels = rng.integers(0, classes, 6)
    return model, X, labels


__all__ = ["EPS", "REL_TOL", "check_gradients", "oracle_loss", "random_small_model", "Conv2d", "Dense"]
