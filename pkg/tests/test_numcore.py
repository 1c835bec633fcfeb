import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from explainleak.numcore import (
    MlpConfig,
    ModelParams,
    cross_entropy,
    forward,
    gelu,
    grad_input,
    per_sample_grads,
    per_sample_loss_grad,
    softmax,
    zero_params,
)

from conftest import central_diff, linear_model, max_rel_err, random_mlp


def phi_oracle(x):
    return float(mpmath.ncdf(x))


def reference_forward(params, x):
    """Plain-Python loops, no numpy linear algebra."""
    a = [float(v) for v in x]
    n_layers = len(params.weights)
    for li, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = [sum(W[o][i] * a[i] for i in range(len(a))) + b[o] for o in range(len(b))]
        if li < n_layers - 1:
            z = [v * phi_oracle(v) for v in z]
        a = z
    return a


def test_gelu_values():
    assert gelu(0.0) == 0.0
    assert abs(gelu(1.0) - 1.0 * phi_oracle(1.0)) < 1e-12
    assert abs(gelu(1.0) - 0.8413447461) < 1e-9
    assert abs(gelu(-1.0) - (-0.1586552539)) < 1e-9


def test_gelu_array_matches_scalar():
    xs = np.linspace(-6, 6, 41)
    assert np.allclose(gelu(xs), [gelu(float(v)) for v in xs], rtol=0, atol=1e-15)


def test_gelu_monotone_either_side_of_minimum():
    # GELU is not globally monotone: single minimum of about -0.17 near x = -0.75.
    xs = np.linspace(-10, 10, 10_000)
    ys = gelu(xs)
    argmin = int(np.argmin(ys))
    assert xs[argmin] == pytest.approx(-0.7518, abs=3e-3)
    assert np.all(np.diff(ys[argmin:]) >= 0)
    # below about -7.5 the values are ~1e-14 and erfc rounding adds 1e-18 jitter
    left = ys[(xs > -7.5) & (xs <= xs[argmin])]
    assert np.all(np.diff(left) <= 0)


def test_forward_zero_params_uniform(zero_model):
    _, probs = forward(zero_model, np.array([1.0, -2.0, 3.0, 0.5]))
    assert np.allclose(probs, 1 / 3, atol=1e-15)


def test_forward_linear_layer_identity(rng):
    W = rng.normal(size=(3, 5))
    x = rng.normal(size=5)
    logits, probs = forward(linear_model(W), x)
    assert np.allclose(logits, W @ x, atol=1e-14)
    assert abs(probs.sum() - 1) < 1e-12


def test_forward_matches_loop_reference():
    rng = np.random.default_rng(7)
    params = random_mlp(rng, d=6, hidden=(5, 4), k=3)
    for _ in range(3):
        x = rng.normal(size=6)
        logits, _ = forward(params, x)
        assert np.max(np.abs(logits - np.array(reference_forward(params, x)))) < 1e-10


def test_forward_dimension_mismatch(zero_model):
    with pytest.raises(ValueError):
        forward(zero_model, np.zeros(3))


def test_grad_input_zero_params(zero_model):
    assert np.all(grad_input(zero_model, np.ones(4), 1) == 0)


def test_grad_input_linear_row(rng):
    W = rng.normal(size=(4, 6))
    g = grad_input(linear_model(W, rng.normal(size=4)), rng.normal(size=6), 2)
    assert np.array_equal(g, W[2])


def test_grad_input_class_out_of_range(zero_model):
    with pytest.raises(ValueError):
        grad_input(zero_model, np.zeros(4), 3)
    with pytest.raises(ValueError):
        grad_input(zero_model, np.zeros(4), -1)


@pytest.mark.parametrize("seed", range(5))
def test_grad_input_finite_differences(seed):
    rng = np.random.default_rng(seed)
    params = random_mlp(rng)
    x = rng.normal(size=params.config.input_dim)
    for c in range(params.config.num_classes):
        fd = central_diff(lambda v: forward(params, v)[0][c], x)
        assert max_rel_err(grad_input(params, x, c), fd) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_per_sample_loss_grad_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    params = random_mlp(rng)
    cfg = params.config
    x = rng.normal(size=cfg.input_dim)
    y = int(rng.integers(cfg.num_classes))

    def loss(flat):
        return cross_entropy(forward(ModelParams.unflatten(flat, cfg), x)[1], y)

    fd = central_diff(loss, params.flatten())
    assert max_rel_err(per_sample_loss_grad(params, x, y), fd) < 1e-4


def test_high_curvature_model_fine_step():
    # sharp weights put h=1e-3 truncation error near 1e-4; h=1e-4 is exact to ~1e-6
    rng = np.random.default_rng(100)
    params = random_mlp(rng, d=8, hidden=(3, 6), k=4, scale=2.5)
    cfg = params.config
    x = rng.normal(size=8)

    def loss(flat):
        return cross_entropy(forward(ModelParams.unflatten(flat, cfg), x)[1], 1)

    fd = central_diff(loss, params.flatten(), h=1e-4)
    assert max_rel_err(per_sample_loss_grad(params, x, 1), fd) < 1e-5


def test_per_sample_grad_linear_closed_form(rng):
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    x = rng.normal(size=4)
    y = 1
    params = linear_model(W, b)
    _, p = forward(params, x)
    onehot = np.eye(3)[y]
    expected_W = np.outer(p - onehot, x)
    g = per_sample_loss_grad(params, x, y)
    assert np.allclose(g[:12].reshape(3, 4), expected_W, atol=1e-14)
    assert np.allclose(g[12:], p - onehot, atol=1e-14)


def test_per_sample_grad_saturated():
    W = np.array([[0.0, 0.0], [200.0, 0.0]])
    g = per_sample_loss_grad(linear_model(W), np.array([1.0, 0.0]), 1)
    assert np.linalg.norm(g) < 1e-8


def test_per_sample_grads_batch_rows_match_single(rng):
    params = random_mlp(rng, d=5, hidden=(4, 3), k=3)
    X = rng.normal(size=(6, 5))
    y = rng.integers(0, 3, size=6)
    G = per_sample_grads(params, X, y)
    for i in range(6):
        assert np.allclose(G[i], per_sample_loss_grad(params, X[i], int(y[i])), atol=1e-14)


def test_flat_layout_is_layer_major_weights_then_bias():
    cfg = MlpConfig(2, (3,), 2)
    flat = np.arange(cfg_size := 2 * 3 + 3 + 3 * 2 + 2, dtype=float)
    p = ModelParams.unflatten(flat, cfg)
    assert np.array_equal(p.weights[0], [[0, 1], [2, 3], [4, 5]])
    assert np.array_equal(p.biases[0], [6, 7, 8])
    assert np.array_equal(p.weights[1], [[9, 10, 11], [12, 13, 14]])
    assert np.array_equal(p.biases[1], [15, 16])
    assert np.array_equal(p.flatten(), flat)
    assert p.num_params == cfg_size


def test_cross_entropy_examples():
    assert abs(cross_entropy(np.full(4, 0.25), 2) - math.log(4)) < 1e-12
    assert cross_entropy(np.array([0.0, 1.0, 0.0]), 1) == 0.0
    assert abs(cross_entropy(np.array([0.7, 0.2, 0.1]), 1) - 1.6094379124341003) < 1e-9
    with pytest.raises(ValueError):
        cross_entropy(np.array([0.5, 0.5]), 2)


def test_cross_entropy_floor():
    assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))


def test_nonfinite_params_rejected():
    with pytest.raises(FloatingPointError):
        linear_model([[np.nan, 1.0], [0.0, 1.0]])


finite_logits = arrays(np.float64, st.integers(2, 8), elements=st.floats(-500, 500))


@given(finite_logits)
def test_softmax_sums_to_one(z):
    p = softmax(z)
    assert abs(p.sum() - 1) < 1e-12
    assert np.all(p >= 0)


@given(finite_logits, st.floats(-1e3, 1e3))
def test_softmax_shift_invariant(z, c):
    assert np.max(np.abs(softmax(z) - softmax(z + c))) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_mlp_gradients_property(seed):
    rng = np.random.default_rng(seed)
    params = random_mlp(rng)
    x = rng.normal(size=params.config.input_dim)
    c = int(rng.integers(params.config.num_classes))
    fd = central_diff(lambda v: forward(params, v)[0][c], x)
    assert max_rel_err(grad_input(params, x, c), fd) < 1e-4


def test_zero_params_helper_shapes():
    p = zero_params(MlpConfig(3, (4, 2), 5))
    assert [w.shape for w in p.weights] == [(4, 3), (2, 4), (5, 2)]
