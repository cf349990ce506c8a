"""Synthetic models and datasets that run fully offline."""

from __future__ import annotations

import numpy as np

from ..ann import AnnModel
from ..dataset import Dataset
from ..errors import ConfigurationError
from ..layers import Dense


def synth_uniform_benchmark(n_samples: int, width: int, v_th: float, seed: int):
    """Hidden pre-activations i.i.d. uniform on [0, v_th], plus a linear readout.

    Inputs are uniform on [0, 1]; the hidden layer is ``v_th * I`` with zero
    bias and a threshold ReLU at ``v_th``, so its pre-activations are
    uniform on [0, v_th].  A two-way readout compares the mean hidden
    activation against ``v_th / 2``; the label is 1 when the input sum
    exceeds ``width / 2``.
    """
    if n_samples < 1 or width < 1 or not v_th > 0:
        raise ConfigurationError(f"need positive arguments, got n={n_samples}, width={width}, v_th={v_th}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n_samples, width))
    labels = (x.sum(axis=1) > width / 2).astype(np.int64)
    hidden = Dense(v_th * np.eye(width), np.zeros(width), activation="threshold_relu", y_th=v_th)
    readout = Dense(np.vstack([-np.ones(width), np.ones(width)]) / width,
                    np.array([v_th / 2, -v_th / 2]))
    model = AnnModel([hidden, readout], (width,))
    data = Dataset(x, labels, 2, name="uniform",
                   provenance={"generator": "uniform", "width": width, "v_th": v_th, "seed": seed})
    return model, data


def exact_grid_fixture():
    """Hand-built network whose pre-activations all sit on the grid k * v_th / T.

    Returns ``(model, dataset, T)`` with T = 16.  Every hidden layer's largest
    activation over the dataset is exactly 1, so max-calibration yields
    v_th = 1, and every pre-activation is a multiple of 1/16; a conversion
    without shift then reproduces the ANN exactly.
    """
    T = 16
    x = np.array([[1.0, 0.25], [0.5, 0.75], [0.125, 1.0], [0.375, 0.5]])
    l1 = Dense(np.eye(2), np.zeros(2), activation="threshold_relu", y_th=1.0)
    l2 = Dense(np.array([[0.5, 0.5], [1.0, -0.5], [-0.5, 1.0]]), np.array([0.0, 0.125, 0.0625]),
               activation="threshold_relu", y_th=1.0)
    l3 = Dense(np.array([[1.0, -1.0, 0.5], [-0.5, 1.0, -1.0]]), np.array([0.0, 0.25]))
    model = AnnModel([l1, l2, l3], (2,))
    h1 = np.clip(x, 0, 1)
    h2 = np.clip(h1 @ l2.weight.T + l2.bias, 0, 1)
    logits = h2 @ l3.weight.T + l3.bias
    labels = np.argmax(logits, axis=1)
    data = Dataset(x, labels, 2, name="exact-grid", provenance={"generator": "exact-grid", "T": T})
    return model, data, T


# --------------------------------------------------------------------------
# stroke glyphs: a 28x28, 10-class stand-in for handwritten digits
# --------------------------------------------------------------------------

GLYPH_SIDE = 28
_TEMPLATE_SEED = 20210117


def _glyph_templates(num_classes: int, strokes: int):
    rng = np.random.default_rng(_TEMPLATE_SEED)
    shared = rng.uniform(5.0, 22.0, size=(num_classes, 2, 2))
    own = rng.uniform(5.0, 22.0, size=(num_classes, strokes - 1, 2, 2))
    # each class reuses one stroke of its neighbour so classes overlap
    segs = np.concatenate([own, shared[(np.arange(num_classes) + 1) % num_classes][:, None]], axis=1)
    return segs  # (classes, strokes, endpoint, xy)


def _render(segs: np.ndarray, width: float) -> np.ndarray:
    """Rasterize line segments (N, S, 2, 2) into (N, 28, 28) intensities in [0, 1]."""
    grid = np.stack(np.meshgrid(np.arange(GLYPH_SIDE), np.arange(GLYPH_SIDE), indexing="xy"), -1)
    p = grid.reshape(1, 1, -1, 2).astype(np.float64)
    a = segs[:, :, None, 0, :]
    b = segs[:, :, None, 1, :]
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, -1) / np.maximum(np.sum(ab * ab, -1), 1e-12), 0.0, 1.0)
    d2 = np.sum((a + t[..., None] * ab - p) ** 2, -1)
    img = np.exp(-d2 / (2 * width ** 2)).max(axis=1)
    return img.reshape(len(segs), GLYPH_SIDE, GLYPH_SIDE)


def synth_glyphs(n_samples: int, seed: int, num_classes: int = 10, strokes: int = 3,
                 jitter: float = 1.2, noise: float = 0.15, width: float = 1.2) -> Dataset:
    """Noisy stroke glyphs on a 1x28x28 grid, pixel values in [0, 1].

    Each class is a fixed set of line segments; a sample jitters every
    endpoint by N(0, jitter^2) pixels, shifts the whole glyph, scales its
    intensity, and adds N(0, noise^2) pixel noise before clipping.
    """
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    templates = _glyph_templates(num_classes, strokes)
    labels = rng.integers(0, num_classes, size=n_samples)
    segs = templates[labels] + rng.normal(0.0, jitter, size=(n_samples, strokes, 2, 2))
    segs += rng.integers(-2, 3, size=(n_samples, 1, 1, 2))
    images = np.empty((n_samples, GLYPH_SIDE, GLYPH_SIDE))
    for s in range(0, n_samples, 1024):
        images[s:s + 1024] = _render(segs[s:s + 1024], width)
    images *= rng.uniform(0.6, 1.0, size=(n_samples, 1, 1))
    images += rng.normal(0.0, noise, size=images.shape)
    images = np.clip(images, 0.0, 1.0)
    return Dataset(images[:, None], labels, num_classes, name="glyphs",
                   provenance={"generator": "glyphs", "seed": seed, "jitter": jitter, "noise": noise})
