"""Layer records shared by ANN and SNN models, plus the activation functions.

A weighted layer (``Dense`` or ``Conv2d``) carries its parameters and the
activation that follows it.  Converted layers additionally carry ``v_th``;
source ANN layers leave it as ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import ConfigurationError, DimensionError
from .numerics import conv_output_shape, pool_output_shape

ACTIVATIONS = ("relu", "threshold_relu", "none")


@dataclass
class Dense:
    weight: np.ndarray  # (out, in); a non-flat input is flattened row-major
    bias: np.ndarray
    activation: str = "none"
    y_th: float | None = None
    v_th: float | None = None

    kind = "dense"

    def output_shape(self, in_shape) -> tuple[int, ...]:
        if prod(in_shape) != self.weight.shape[1]:
            raise DimensionError(
                f"dense layer expects {self.weight.shape[1]} inputs, got shape {tuple(in_shape)}"
            )
        return (self.weight.shape[0],)


@dataclass
class Conv2d:
    kernel: np.ndarray  # (oc, ic, kh, kw)
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    activation: str = "none"
    y_th: float | None = None
    v_th: float | None = None

    kind = "conv2d"

    @property
    def weight(self) -> np.ndarray:
        return self.kernel

    def output_shape(self, in_shape) -> tuple[int, ...]:
        if len(in_shape) != 3:
            raise DimensionError(f"conv2d expects a (c, h, w) input, got shape {tuple(in_shape)}")
        return conv_output_shape(in_shape, self.kernel.shape, self.stride, self.padding)


@dataclass
class AvgPool:
    k: int
    stride: int

    kind = "avgpool"

    def output_shape(self, in_shape) -> tuple[int, ...]:
        if len(in_shape) != 3:
            raise DimensionError(f"avgpool expects a (c, h, w) input, got shape {tuple(in_shape)}")
        return pool_output_shape(in_shape, self.k, self.stride)


@dataclass
class Dropout:
    p: float

    kind = "dropout"

    def output_shape(self, in_shape) -> tuple[int, ...]:
        return tuple(in_shape)


Layer = Dense | Conv2d | AvgPool | Dropout


def is_weighted(layer) -> bool:
    return isinstance(layer, (Dense, Conv2d))


def check_activation(layer) -> None:
    if layer.activation not in ACTIVATIONS:
        raise ConfigurationError(f"unknown activation {layer.activation!r}")
    if layer.activation == "threshold_relu":
        if layer.y_th is None or not layer.y_th > 0:
            raise ConfigurationError(f"threshold_relu needs y_th > 0, got {layer.y_th}")


def infer_shapes(layers, input_shape) -> list[tuple[int, ...]]:
    """Output shape of every layer; raises if consecutive layers do not conform."""
    shapes = []
    shape = tuple(input_shape)
    for layer in layers:
        if isinstance(layer, Dropout) and not 0 <= layer.p < 1:
            raise ConfigurationError(f"dropout p must lie in [0, 1), got {layer.p}")
        if is_weighted(layer):
            check_activation(layer)
            if layer.bias.shape != (layer.weight.shape[0],):
                raise DimensionError(
                    f"{layer.kind} bias has shape {layer.bias.shape}, expected ({layer.weight.shape[0]},)"
                )
        shape = layer.output_shape(shape)
        shapes.append(shape)
    return shapes


# --------------------------------------------------------------------------
# activations
# --------------------------------------------------------------------------

def threshold_relu(x: float, y_th: float) -> float:
    """Clamp ``x`` to ``[0, y_th]``."""
    if x <= 0:
        return 0.0
    if x < y_th:
        return float(x)
    return float(y_th)


def activate(z: np.ndarray, activation: str, y_th: float | None = None,
             use_threshold: bool = True) -> np.ndarray:
    if activation == "none":
        return z
    out = np.maximum(z, 0.0)
    if activation == "threshold_relu" and use_threshold:
        out = np.minimum(out, y_th)
    return out


def activation_grad(z: np.ndarray, activation: str, y_th: float | None = None,
                    use_threshold: bool = True) -> np.ndarray:
    """Derivative mask; zero at every kink."""
    if activation == "none":
        return np.ones_like(z)
    if activation == "threshold_relu" and use_threshold:
        return ((z > 0) & (z < y_th)).astype(np.float64)
    return (z > 0).astype(np.float64)
