import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from snnforge.errors import ConfigurationError, DimensionError
from snnforge.numerics import (
    affine, affine_backward, affine_batch, avgpool, avgpool_backward, avgpool_batch, conv2d,
    conv2d_backward, conv2d_batch,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_affine_identity():
    assert affine(np.eye(2), [0, 0], [3, -1]).tolist() == [3, -1]


def test_affine_hand_sum():
    assert affine([[1, 2]], [1], [3, 4]).tolist() == [12]


def test_affine_zero_weights_pass_bias():
    assert affine(np.zeros((2, 2)), [5, 6], [9, 9]).tolist() == [5, 6]


@pytest.mark.parametrize("W,b,x,name", [
    (np.zeros((2, 3)), np.zeros(2), np.zeros(2), "x"),
    (np.zeros((2, 3)), np.zeros(3), np.zeros(3), "b"),
    (np.zeros(3), np.zeros(3), np.zeros(3), "W"),
])
def test_affine_shape_errors_name_operand(W, b, x, name):
    with pytest.raises(DimensionError, match=rf"\b{name}\b"):
        affine(W, b, x)


def test_conv_scalar_kernel():
    x = np.array([[[1.0, 2], [3, 4]]])
    out = conv2d(np.full((1, 1, 1, 1), 2.0), [0.0], x)
    assert out.tolist() == [[[2, 4], [6, 8]]]


def test_conv_all_ones_kernel():
    x = np.array([[[1.0, 2], [3, 4]]])
    assert conv2d(np.ones((1, 1, 2, 2)), [0.0], x).tolist() == [[[10]]]


def test_conv_zero_input_yields_bias():
    rng = np.random.default_rng(0)
    out = conv2d(rng.normal(size=(1, 3, 3, 3)), [1.5], np.zeros((3, 6, 6)), padding=1)
    assert out.shape == (1, 6, 6) and np.all(out == 1.5)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(1)
    K, b, x = rng.normal(size=(2, 3, 3, 3)), rng.normal(size=2), rng.normal(size=(3, 7, 7))
    out = conv2d(K, b, x, stride=2, padding=1)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 4))
    for o in range(2):
        for i in range(4):
            for j in range(4):
                ref[o, i, j] = b[o] + sum(
                    K[o, c, u, v] * xp[c, 2 * i + u, 2 * j + v]
                    for c in range(3) for u in range(3) for v in range(3))
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_conv_non_integral_output_is_configuration_error():
    with pytest.raises(ConfigurationError):
        conv2d(np.ones((1, 1, 2, 2)), [0.0], np.ones((1, 5, 5)), stride=2)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        conv2d(np.ones((1, 2, 1, 1)), [0.0], np.ones((3, 4, 4)))


def test_avgpool_mean_of_four():
    assert avgpool(np.array([[[1.0, 2], [3, 4]]]), 2, 2).tolist() == [[[2.5]]]


def test_avgpool_k1_identity():
    x = np.random.default_rng(2).normal(size=(2, 3, 3))
    np.testing.assert_array_equal(avgpool(x, 1, 1), x)


def test_avgpool_constant_preserved():
    out = avgpool(np.full((1, 4, 4), 7.0), 2, 2)
    assert out.shape == (1, 2, 2) and np.all(out == 7.0)


def test_avgpool_non_integral_output():
    with pytest.raises(ConfigurationError):
        avgpool(np.ones((1, 5, 5)), 2, 2)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 4), elements=finite), st.integers(0, 2**32 - 1))
def test_avgpool_equals_averaging_matrix(x, seed):
    # pooling the 4x4 map with 2x2 windows is a fixed (4, 16) averaging matrix
    A = np.zeros((4, 16))
    for r in range(2):
        for c in range(2):
            for u in range(2):
                for v in range(2):
                    A[2 * r + c, (2 * r + u) * 4 + 2 * c + v] = 0.25
    np.testing.assert_allclose(avgpool(x[None], 2, 2).ravel(), A @ x.ravel(), rtol=1e-12, atol=1e-12)


def _close_rel(a, b, rel=1e-12):
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return np.max(np.abs(a - b)) <= rel * scale * 10  # a handful of roundings per entry


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), finite, finite)
def test_affine_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    W, b = rng.normal(size=(3, 5)), rng.normal(size=3)
    x, y = rng.normal(size=5), rng.normal(size=5)
    lhs = affine(W, b, alpha * x + beta * y)
    rhs = alpha * affine(W, np.zeros(3), x) + beta * affine(W, np.zeros(3), y) + b
    assert _close_rel(lhs, rhs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), finite, finite)
def test_conv_and_pool_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(2, 2, 3, 3))
    x, y = rng.normal(size=(2, 6, 6)), rng.normal(size=(2, 6, 6))
    z = np.zeros(2)
    lhs = conv2d(K, z, alpha * x + beta * y, padding=1)
    assert _close_rel(lhs, alpha * conv2d(K, z, x, padding=1) + beta * conv2d(K, z, y, padding=1))
    lhs = avgpool(alpha * x + beta * y, 2, 2)
    assert _close_rel(lhs, alpha * avgpool(x, 2, 2) + beta * avgpool(y, 2, 2))


def test_batched_ops_match_single_sample():
    rng = np.random.default_rng(3)
    W, b, X = rng.normal(size=(4, 6)), rng.normal(size=4), rng.normal(size=(5, 6))
    np.testing.assert_allclose(affine_batch(W, b, X), np.stack([affine(W, b, x) for x in X]), rtol=1e-13)
    K, kb, Xc = rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3), rng.normal(size=(5, 2, 8, 8))
    np.testing.assert_allclose(conv2d_batch(K, kb, Xc, 1, 1),
                               np.stack([conv2d(K, kb, x, 1, 1) for x in Xc]), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(avgpool_batch(Xc, 2, 2), np.stack([avgpool(x, 2, 2) for x in Xc]), rtol=1e-13)


def _numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def test_backward_ops_match_finite_differences():
    rng = np.random.default_rng(4)
    W, b, X = rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=(2, 4))
    G = rng.normal(size=(2, 3))
    dX, dW, db = affine_backward(W, X, G)
    loss = lambda: float(np.sum(affine_batch(W, b, X) * G))
    np.testing.assert_allclose(dX, _numeric_grad(loss, X), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dW, _numeric_grad(loss, W), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(db, G.sum(0), rtol=1e-12)

    K, kb, Xc = rng.normal(size=(2, 2, 3, 3)), rng.normal(size=2), rng.normal(size=(2, 2, 5, 5))
    Gc = rng.normal(size=(2, 2, 3, 3))
    dXc, dK, dkb = conv2d_backward(K, Xc, Gc, 2, 1)
    loss = lambda: float(np.sum(conv2d_batch(K, kb, Xc, 2, 1) * Gc))
    np.testing.assert_allclose(dXc, _numeric_grad(loss, Xc), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dK, _numeric_grad(loss, K), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dkb, Gc.sum((0, 2, 3)), rtol=1e-12)

    Xp, Gp = rng.normal(size=(2, 2, 4, 4)), rng.normal(size=(2, 2, 2, 2))
    loss = lambda: float(np.sum(avgpool_batch(Xp, 2, 2) * Gp))
    np.testing.assert_allclose(avgpool_backward(Xp.shape, Gp, 2, 2), _numeric_grad(loss, Xp), rtol=1e-6, atol=1e-8)


def test_results_are_finite_for_finite_inputs():
    rng = np.random.default_rng(5)
    out = conv2d(rng.normal(size=(2, 1, 3, 3)) * 1e100, [0.0, 1.0], rng.normal(size=(1, 5, 5)) * 1e100)
    assert np.all(np.isfinite(out))
