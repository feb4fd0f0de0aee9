import itertools
import math

import numpy as np
import pytest

from res2spoof import tensor as T
from res2spoof.errors import ConfigurationError, NumericError
from res2spoof.tensor import grad_check

from oracles import conv2d_loop, matmul_loop, maxpool_grad_loop, mean_std_loop, pool_loop


# --- conv2d ---------------------------------------------------------------

def test_conv_scalar_kernel_scales():
    out, _ = T.conv2d(np.ones((1, 1, 3, 3)), np.full((1, 1, 1, 1), 2.0))
    np.testing.assert_array_equal(out, np.full((1, 1, 3, 3), 2.0))


def test_conv_identity_kernel():
    x = np.arange(9.0).reshape(1, 1, 3, 3)
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1
    out, _ = T.conv2d(x, w, 1, 1)
    np.testing.assert_array_equal(out, x)


def test_conv_matches_loop(rng):
    x = rng.standard_normal((2, 3, 5, 5))
    w = rng.standard_normal((4, 3, 3, 3))
    out, _ = T.conv2d(x, w, 2, 1)
    assert out.shape == (2, 4, 3, 3)
    assert np.max(np.abs(out - conv2d_loop(x, w, 2, 1))) < 1e-12


@pytest.mark.parametrize("stride,pad", list(itertools.product((1, 2), (0, 1))))
def test_conv_exhaustive_small_shapes(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    for N, C, H, W, k in [(1, 1, 3, 3, 3), (2, 3, 5, 4, 3), (4, 4, 8, 8, 3), (3, 2, 7, 6, 1), (1, 4, 8, 5, 2)]:
        if (H + 2 * pad - k) // stride + 1 < 1:
            continue
        x = rng.standard_normal((N, C, H, W))
        w = rng.standard_normal((3, C, k, k))
        out, _ = T.conv2d(x, w, stride, pad)
        assert np.max(np.abs(out - conv2d_loop(x, w, stride, pad))) < 1e-12


def test_conv_channel_mismatch():
    with pytest.raises(ConfigurationError):
        T.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))


def test_conv_spatial_collapse():
    with pytest.raises(ConfigurationError, match="collapses"):
        T.conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)))


@pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (3, 2, 1), (1, 2, 0), (1, 1, 0), (7, 2, 3)])
def test_conv_grads(rng, k, stride, pad):
    x = rng.standard_normal((2, 2, 7, 7))
    w = rng.standard_normal((3, 2, k, k))
    R = rng.standard_normal(T.conv2d(x, w, stride, pad)[0].shape)

    def fx(xv):
        out, cache = T.conv2d(xv, w, stride, pad)
        return float(np.sum(out * R)), T.conv2d_backward(R, cache)[0]

    def fw(wv):
        out, cache = T.conv2d(x, wv, stride, pad)
        return float(np.sum(out * R)), T.conv2d_backward(R, cache)[1]

    assert grad_check(fx, x) < 1e-6
    assert grad_check(fw, w) < 1e-6


# --- pooling --------------------------------------------------------------

def test_pool_examples():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    assert T.pool2d(x, "max", 2, 2)[0].item() == 4.0
    assert T.pool2d(x, "avg", 2, 2)[0].item() == 2.5


@pytest.mark.parametrize("kind", ["max", "avg"])
@pytest.mark.parametrize("k,stride,pad", [(3, 2, 0), (3, 2, 1), (2, 2, 0), (3, 1, 1), (2, 1, 1)])
def test_pool_matches_loop(rng, kind, k, stride, pad):
    x = rng.standard_normal((2, 2, 6, 7))
    out, _ = T.pool2d(x, kind, k, stride, pad)
    np.testing.assert_allclose(out, pool_loop(x, kind, k, stride, pad), rtol=0, atol=1e-12)


def test_maxpool_ties_go_to_first():
    x = np.ones((1, 1, 4, 4))
    out, cache = T.pool2d(x, "max", 2, 2)
    dx = T.pool2d_backward(np.ones_like(out), cache)
    expected = np.zeros((1, 1, 4, 4))
    expected[0, 0, ::2, ::2] = 1
    np.testing.assert_array_equal(dx, expected)


def test_maxpool_backward_matches_loop(rng):
    # coarse values force ties
    x = rng.integers(0, 3, (2, 2, 6, 6)).astype(float)
    out, cache = T.pool2d(x, "max", 3, 2, 1)
    dout = rng.standard_normal(out.shape)
    np.testing.assert_allclose(T.pool2d_backward(dout, cache), maxpool_grad_loop(x, dout, 3, 2, 1), atol=1e-12)


def test_pool_collapse():
    with pytest.raises(ConfigurationError):
        T.pool2d(np.zeros((1, 1, 2, 2)), "max", 3, 2)


@pytest.mark.parametrize("kind", ["max", "avg"])
def test_pool_grads(rng, kind):
    x = rng.standard_normal((2, 2, 6, 6))
    R = rng.standard_normal(T.pool2d(x, kind, 3, 2, 1)[0].shape)

    def f(xv):
        out, cache = T.pool2d(xv, kind, 3, 2, 1)
        return float(np.sum(out * R)), T.pool2d_backward(R, cache)

    assert grad_check(f, x) < 1e-6


# --- global pooling -------------------------------------------------------

def test_global_pool_constant():
    x = np.full((2, 3, 4, 4), 3.0)
    np.testing.assert_allclose(T.global_pool(x, "avg")[0], 3.0)
    stats = T.global_pool(x, "stats")[0]
    np.testing.assert_allclose(stats[:, :3], 3.0)
    # eps sits inside the square root, so the std of a constant is sqrt(1e-8)
    np.testing.assert_allclose(stats[:, 3:], 1e-4, rtol=1e-12)


def test_global_stats_matches_direct(rng):
    x = rng.standard_normal((2, 4, 3, 3))
    out = T.global_pool(x, "stats")[0]
    assert out.shape == (2, 8)
    assert np.max(np.abs(out - mean_std_loop(x))) < 1e-10


@pytest.mark.parametrize("kind", ["avg", "stats"])
def test_global_pool_grads(rng, kind):
    x = rng.standard_normal((2, 3, 3, 4))
    R = rng.standard_normal(T.global_pool(x, kind)[0].shape)

    def f(xv):
        out, cache = T.global_pool(xv, kind)
        return float(np.sum(out * R)), T.global_pool_backward(R, cache)

    assert grad_check(f, x) < 1e-6


# --- batch norm -----------------------------------------------------------

def _bn(x, gamma, beta, training=True):
    C = x.shape[1]
    return T.batchnorm2d(x, gamma, beta, np.zeros(C), np.ones(C), training)


def test_bn_normalized_input_passes_through(rng):
    x = rng.standard_normal((4, 3, 5, 5))
    x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
    out, _ = _bn(x, np.ones(3), np.zeros(3))
    # only eps separates output from input
    np.testing.assert_allclose(out, x / np.sqrt(1 + 1e-5), rtol=0, atol=1e-12)
    small = np.abs(x) < 0.2
    assert np.max(np.abs(out - x)[small]) < 1e-6


def test_bn_zero_gamma_gives_beta(rng):
    out, _ = _bn(rng.standard_normal((2, 3, 4, 4)), np.zeros(3), np.array([1.0, -2.0, 0.5]))
    np.testing.assert_array_equal(out, np.broadcast_to(np.array([1.0, -2.0, 0.5])[None, :, None, None], out.shape))


def test_bn_train_statistics(rng):
    x = 3 + 2 * rng.standard_normal((4, 3, 5, 5))
    out, _ = _bn(x, np.ones(3), np.zeros(3))
    assert np.all(np.abs(out.mean(axis=(0, 2, 3))) < 1e-7)
    # var of xhat is var / (var + eps)
    var = x.var(axis=(0, 2, 3))
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), var / (var + 1e-5), atol=1e-12)
    assert np.all(np.abs(out.var(axis=(0, 2, 3)) - 1) < 1e-5)


def test_bn_running_stats_update(rng):
    x = rng.standard_normal((2, 2, 3, 3))
    rm, rv = np.zeros(2), np.ones(2)
    T.batchnorm2d(x, np.ones(2), np.zeros(2), rm, rv, True)
    m = 2 * 3 * 3
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * m / (m - 1))


def test_bn_eval_uses_initial_stats(rng):
    x = rng.standard_normal((1, 2, 3, 3))
    out, _ = _bn(x, np.ones(2), np.zeros(2), training=False)
    np.testing.assert_allclose(out, x / np.sqrt(1 + 1e-5))


def test_bn_train_needs_two_values():
    with pytest.raises(ConfigurationError):
        _bn(np.zeros((1, 1, 1, 1)), np.ones(1), np.zeros(1))


@pytest.mark.parametrize("training", [True, False])
def test_bn_grads(rng, training):
    x = rng.standard_normal((3, 2, 3, 3))
    g, b = rng.standard_normal(2), rng.standard_normal(2)
    rm, rv = rng.standard_normal(2), rng.uniform(0.5, 2, 2)
    R = rng.standard_normal(x.shape)

    def run(xv, gv, bv):
        out, cache = T.batchnorm2d(xv, gv, bv, rm.copy(), rv.copy(), training)
        return float(np.sum(out * R)), T.batchnorm2d_backward(R, cache)

    assert grad_check(lambda v: (run(v, g, b)[0], run(v, g, b)[1][0]), x) < 1e-6
    assert grad_check(lambda v: (run(x, v, b)[0], run(x, v, b)[1][1]), g) < 1e-6
    assert grad_check(lambda v: (run(x, g, v)[0], run(x, g, v)[1][2]), b) < 1e-6


# --- activations, linear, softmax ----------------------------------------

def test_relu_and_sigmoid_values():
    np.testing.assert_array_equal(T.activation(np.array([-1.0, 0.0, 2.0]), "relu")[0], [0, 0, 2])
    assert T.sigmoid(np.array([0.0]))[0] == 0.5
    assert np.all(np.isfinite(T.sigmoid(np.array([-1000.0, 1000.0]))))


def test_relu_grad_at_zero_is_zero():
    out, cache = T.activation(np.array([0.0, 1.0]), "relu")
    np.testing.assert_array_equal(T.activation_backward(np.ones(2), cache), [0.0, 1.0])


@pytest.mark.parametrize("kind", ["relu", "sigmoid"])
def test_activation_grads(rng, kind):
    x = rng.standard_normal(20)
    x = np.where(np.abs(x) < 0.01, 0.5, x)

    def f(xv):
        out, cache = T.activation(xv, kind)
        return float(out.sum()), T.activation_backward(np.ones_like(out), cache)

    assert grad_check(f, x) < 1e-6


def test_linear_examples(rng):
    x = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(T.linear(x, np.eye(4), np.zeros(4))[0], x)
    b = np.array([1.0, -1.0])
    np.testing.assert_array_equal(T.linear(x, np.zeros((4, 2)), b)[0], np.tile(b, (3, 1)))
    x, w, b = rng.standard_normal((3, 5)), rng.standard_normal((5, 2)), rng.standard_normal(2)
    np.testing.assert_allclose(T.linear(x, w, b)[0], matmul_loop(x, w, b), atol=1e-12)
    with pytest.raises(ConfigurationError):
        T.linear(x, np.zeros((4, 2)), b)


def test_linear_grads(rng):
    x, w, b = rng.standard_normal((3, 5)), rng.standard_normal((5, 2)), rng.standard_normal(2)
    R = rng.standard_normal((3, 2))

    def run(xv, wv, bv):
        out, cache = T.linear(xv, wv, bv)
        return float(np.sum(out * R)), T.linear_backward(R, cache)

    assert grad_check(lambda v: (run(v, w, b)[0], run(v, w, b)[1][0]), x) < 1e-6
    assert grad_check(lambda v: (run(x, v, b)[0], run(x, v, b)[1][1]), w) < 1e-6
    assert grad_check(lambda v: (run(x, w, v)[0], run(x, w, v)[1][2]), b) < 1e-6


def test_softmax_xent_examples():
    loss, lp = T.softmax_xent(np.zeros((1, 2)), [0])
    np.testing.assert_allclose(lp, [[math.log(0.5)] * 2])
    assert abs(loss - math.log(2)) < 1e-12
    loss, _ = T.softmax_xent(np.array([[20.0, -20.0]]), [0])
    assert loss < 1e-8


def test_softmax_rows_and_shift_invariance(rng):
    logits = 10 * rng.standard_normal((50, 2))
    labels = rng.integers(0, 2, 50)
    loss, lp = T.softmax_xent(logits, labels)
    assert np.all(np.abs(np.exp(lp).sum(axis=1) - 1) < 1e-9)
    shifted, _ = T.softmax_xent(logits + rng.standard_normal((50, 1)) * 100, labels)
    assert abs(loss - shifted) < 1e-9


def test_softmax_xent_grad(rng):
    logits = rng.standard_normal((6, 2))
    labels = rng.integers(0, 2, 6)

    def f(z):
        loss, lp = T.softmax_xent(z, labels)
        return loss, T.softmax_xent_backward(lp, labels)

    assert grad_check(f, logits) < 1e-6


# --- grad_check itself and debug mode ------------------------------------

def test_grad_check_trivial():
    assert grad_check(lambda x: (float(x.sum()), np.ones_like(x)), np.random.default_rng(0).standard_normal(7)) < 1e-10
    assert grad_check(lambda x: (float((x**2).sum()), 2 * x), np.array([1.0, 2.0])) < 1e-8


def test_grad_check_detects_wrong_gradient():
    assert grad_check(lambda x: (float((x**2).sum()), x), np.array([1.0, 2.0])) > 0.1


def test_check_finite_mode():
    T.set_check_finite(True)
    try:
        with pytest.raises(NumericError):
            T.conv2d(np.full((1, 1, 2, 2), np.nan), np.ones((1, 1, 1, 1)))
    finally:
        T.set_check_finite(False)
    out, _ = T.conv2d(np.full((1, 1, 2, 2), np.nan), np.ones((1, 1, 1, 1)))
    assert np.isnan(out).all()


def test_forward_is_deterministic(rng):
    x, w = rng.standard_normal((2, 3, 8, 8)), rng.standard_normal((4, 3, 3, 3))
    a, _ = T.conv2d(x, w, 1, 1)
    b, _ = T.conv2d(x, w, 1, 1)
    assert a.tobytes() == b.tobytes()


def test_float32_preserved(rng):
    x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    out, _ = T.conv2d(x, w, 2, 1)
    assert out.dtype == np.float32
    out, _ = T.batchnorm2d(out, np.ones(4, np.float32), np.zeros(4, np.float32),
                           np.zeros(4, np.float32), np.ones(4, np.float32), True)
    assert out.dtype == np.float32
