"""Dense float64 kernels: affine maps, 2-D cross-correlation and average pooling.

The ANN forward/backward passes and the SNN per-timestep drive both go
through these functions, so a converted network sees exactly the same
arithmetic as its source.  Single-sample functions validate their operands
and delegate to the ``*_batch`` variants, which take a leading sample axis.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _pooled_extent(size: int, k: int, stride: int, padding: int, what: str) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ConfigurationError(
            f"{what}: input extent {size} with window {k}, stride {stride}, "
            f"padding {padding} does not give an integral output size"
        )
    return span // stride + 1


# --------------------------------------------------------------------------
# affine
# --------------------------------------------------------------------------

def affine(W, b, x) -> np.ndarray:
    """Return ``W @ x + b`` for a single input vector.

    Raises DimensionError naming the operand whose shape does not conform.
    """
    W, b, x = as_tensor(W), as_tensor(b), as_tensor(x)
    if W.ndim != 2:
        raise DimensionError(f"W must be 2-D (out x in), got shape {W.shape}")
    if b.shape != (W.shape[0],):
        raise DimensionError(f"b has shape {b.shape}, expected ({W.shape[0]},) to match W")
    if x.shape != (W.shape[1],):
        raise DimensionError(f"x has shape {x.shape}, expected ({W.shape[1]},) to match W")
    return affine_batch(W, b, x[None, :])[0]


def affine_batch(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row-wise affine map; ``X`` has shape (N, in), the result (N, out)."""
    if X.ndim != 2 or X.shape[1] != W.shape[1]:
        raise DimensionError(f"x batch has shape {X.shape}, expected (N, {W.shape[1]})")
    return X @ W.T + b


def affine_backward(W: np.ndarray, X: np.ndarray, dY: np.ndarray):
    """Gradients of a batched affine map: (dX, dW, db)."""
    return dY @ W, dY.T @ X, dY.sum(axis=0)


# --------------------------------------------------------------------------
# conv2d
# --------------------------------------------------------------------------

def conv_output_shape(in_shape, kernel_shape, stride: int, padding: int) -> tuple[int, int, int]:
    oc, ic, kh, kw = kernel_shape
    c, h, w = in_shape
    if c != ic:
        raise DimensionError(f"x has {c} channels but kernel expects {ic}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    return (
        oc,
        _pooled_extent(h, kh, stride, padding, "conv2d rows"),
        _pooled_extent(w, kw, stride, padding, "conv2d cols"),
    )


def _windows(X: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        X = np.pad(X, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(X, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(kernel, bias, x, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Zero-padded cross-correlation of one (c, h, w) input."""
    kernel, bias, x = as_tensor(kernel), as_tensor(bias), as_tensor(x)
    if kernel.ndim != 4:
        raise DimensionError(f"kernel must be 4-D (oc x ic x kh x kw), got shape {kernel.shape}")
    if bias.shape != (kernel.shape[0],):
        raise DimensionError(f"bias has shape {bias.shape}, expected ({kernel.shape[0]},)")
    if x.ndim != 3:
        raise DimensionError(f"x must be 3-D (c x h x w), got shape {x.shape}")
    conv_output_shape(x.shape, kernel.shape, stride, padding)
    return conv2d_batch(kernel, bias, x[None], stride, padding)[0]


def conv2d_batch(kernel: np.ndarray, bias: np.ndarray, X: np.ndarray,
                 stride: int = 1, padding: int = 0) -> np.ndarray:
    conv_output_shape(X.shape[1:], kernel.shape, stride, padding)
    _, _, kh, kw = kernel.shape
    win = _windows(X, kh, kw, stride, padding)  # (N, ic, H, W, kh, kw)
    out = np.tensordot(win, kernel, axes=([1, 4, 5], [1, 2, 3]))  # (N, H, W, oc)
    return out.transpose(0, 3, 1, 2) + bias[None, :, None, None]


def conv2d_backward(kernel: np.ndarray, X: np.ndarray, dY: np.ndarray,
                    stride: int = 1, padding: int = 0):
    """Gradients of ``conv2d_batch``: (dX, dkernel, dbias)."""
    _, _, kh, kw = kernel.shape
    win = _windows(X, kh, kw, stride, padding)
    dK = np.tensordot(dY, win, axes=([0, 2, 3], [0, 2, 3]))  # (oc, ic, kh, kw)
    db = dY.sum(axis=(0, 2, 3))

    n, c, h, w = X.shape
    H, W = dY.shape[2], dY.shape[3]
    dXp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(dY, kernel[:, :, i, j], axes=([1], [0]))  # (N, H, W, ic)
            dXp[:, :, i:i + stride * H:stride, j:j + stride * W:stride] += contrib.transpose(0, 3, 1, 2)
    if padding:
        dXp = dXp[:, :, padding:-padding, padding:-padding]
    return dXp, dK, db


# --------------------------------------------------------------------------
# avgpool
# --------------------------------------------------------------------------

def pool_output_shape(in_shape, k: int, stride: int) -> tuple[int, int, int]:
    if k < 1 or stride < 1:
        raise ConfigurationError(f"avgpool needs k >= 1 and stride >= 1, got {k}, {stride}")
    c, h, w = in_shape
    return c, _pooled_extent(h, k, stride, 0, "avgpool rows"), _pooled_extent(w, k, stride, 0, "avgpool cols")


def avgpool(x, k: int, stride: int) -> np.ndarray:
    """Mean over each k x k window of a (c, h, w) input."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"x must be 3-D (c x h x w), got shape {x.shape}")
    return avgpool_batch(x[None], k, stride)[0]


def avgpool_batch(X: np.ndarray, k: int, stride: int) -> np.ndarray:
    pool_output_shape(X.shape[1:], k, stride)
    win = sliding_window_view(X, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    return win.sum(axis=(-2, -1)) / (k * k)


def avgpool_backward(in_shape, dY: np.ndarray, k: int, stride: int) -> np.ndarray:
    dX = np.zeros(in_shape)
    H, W = dY.shape[2], dY.shape[3]
    share = dY / (k * k)
    for i in range(k):
        for j in range(k):
            dX[:, :, i:i + stride * H:stride, j:j + stride * W:stride] += share
    return dX
