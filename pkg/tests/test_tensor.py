"""Tensor primitives: forward contracts, oracles, and gradient checks."""

import numpy as np
import pytest

import lfsamba.tensor as T
from lfsamba.errors import ContractError, ShapeError
from lfsamba.tensor import Tensor, backward, gradcheck


def t(data, rg=False):
    return Tensor(np.asarray(data, dtype=float), requires_grad=rg)


# -- linear -------------------------------------------------------------------


def test_linear_identity():
    y = T.linear(t([1.0, 2.0]), t(np.eye(2)), t([0.0, 0.0]))
    assert np.array_equal(y.data, [1.0, 2.0])


def test_linear_zero_weight_bias():
    y = T.linear(t([1.0, 2.0]), t(np.zeros((2, 2))), t([3.0, 4.0]))
    assert np.array_equal(y.data, [3.0, 4.0])


def test_linear_matmul_oracle():
    x = np.array([1.0, 2.0])
    w = np.array([[1.0, 1.0], [2.0, 0.0]])
    expected = w @ x  # [3, 2]
    y = T.linear(t(x), t(w), t([0.0, 0.0]))
    assert np.allclose(y.data, expected)
    assert np.allclose(y.data, [3.0, 2.0])


def test_linear_shape_error_names_axes():
    with pytest.raises(ShapeError, match="last axis"):
        T.linear(t([1.0, 2.0, 3.0]), t(np.eye(2)), t([0.0, 0.0]))


def test_linear_batched_leading_dims():
    x = np.arange(12.0).reshape(2, 3, 2)
    w = np.array([[1.0, -1.0]])
    y = T.linear(t(x), t(w), t([0.5]))
    assert y.shape == (2, 3, 1)
    assert np.allclose(y.data, (x @ w.T) + 0.5)


# -- conv2d -------------------------------------------------------------------


def center_one_kernel(c, k=3):
    kernel = np.zeros((c, 1, k, k))
    kernel[:, 0, k // 2, k // 2] = 1.0
    return kernel


def test_conv2d_depthwise_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 5, 4))
    y = T.conv2d(t(x), t(center_one_kernel(3)), t(np.zeros(3)), padding=1,
                 depthwise=True)
    assert np.array_equal(y.data, x)


def test_conv2d_zero_kernel():
    x = t(np.ones((2, 4, 4)))
    y = T.conv2d(x, t(np.zeros((3, 2, 3, 3))), t(np.zeros(3)), padding=1)
    assert np.array_equal(y.data, np.zeros((3, 4, 4)))


def test_conv2d_all_ones_hand_sum():
    # all-ones 3x3 depthwise kernel on all-ones 3x3 input, zero padding 1:
    # the centre output sums all nine inputs
    x = t(np.ones((1, 3, 3)))
    k = t(np.ones((1, 1, 3, 3)))
    y = T.conv2d(x, k, t(np.zeros(1)), padding=1, depthwise=True)
    assert y.data[0, 1, 1] == 9.0
    assert y.data[0, 0, 0] == 4.0  # corner sees a 2x2 valid window


def test_conv2d_kernel_too_large():
    with pytest.raises(ShapeError, match="larger than padded"):
        T.conv2d(t(np.ones((1, 2, 2))), t(np.ones((1, 1, 5, 5))), None, padding=0)


def test_conv2d_oracle_random():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 4, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    y = T.conv2d(t(x), t(k), t(b), padding=1).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    expected = np.zeros((3, 4, 5))
    for o in range(3):
        for i in range(4):
            for j in range(5):
                expected[o, i, j] = (xp[:, i : i + 3, j : j + 3] * k[o]).sum() + b[o]
    assert np.allclose(y, expected)


# -- activations -----------------------------------------------------------------


def test_activation_values():
    assert T.activation(t([0.0]), "silu").data[0] == 0.0
    assert T.activation(t([-1.0]), "relu").data[0] == 0.0
    assert abs(T.activation(t([1.0]), "silu").data[0] - 0.7311) < 1e-4
    assert abs(T.activation(t([0.0]), "softplus").data[0] - np.log(2.0)) < 1e-12
    assert abs(T.activation(t([0.0]), "sigmoid").data[0] - 0.5) < 1e-15


def test_activation_overflow_guard():
    big = T.activation(t([1e4, -1e4]), "softplus").data
    assert np.all(np.isfinite(big))
    assert big[0] == 1e4
    sg = T.activation(t([1e4, -1e4]), "sigmoid").data
    assert np.all(np.isfinite(sg))


def test_activation_unknown_kind():
    with pytest.raises(ContractError):
        T.activation(t([1.0]), "tanh")


# -- layer norm ------------------------------------------------------------------


def test_layer_norm_constant_input():
    y = T.layer_norm(t(np.full((3, 4), 2.5)), t(np.ones(4)), t(np.zeros(4)))
    assert np.allclose(y.data, 0.0)


def test_layer_norm_closed_form():
    y = T.layer_norm(t([1.0, 3.0]), t(np.ones(2)), t(np.zeros(2)), eps=1e-5)
    assert np.allclose(y.data, [-1.0, 1.0], atol=1e-3)


def test_layer_norm_gamma_zero_broadcasts_beta():
    beta = np.array([1.0, -2.0, 3.0])
    y = T.layer_norm(t(np.random.default_rng(0).standard_normal((4, 3))),
                     t(np.zeros(3)), t(beta))
    assert np.allclose(y.data, np.broadcast_to(beta, (4, 3)))


# -- pooling ---------------------------------------------------------------------


def test_pool2d_avg_constant():
    y = T.pool2d(t(np.full((2, 4, 4), 0.25)), "avg", 2)
    assert np.array_equal(y.data, np.full((2, 2, 2), 0.25))


def test_pool2d_max_and_avg_hand():
    x = t([[[1.0, 2.0], [3.0, 4.0]]])
    assert T.pool2d(x, "max", 2).data[0, 0, 0] == 4.0
    assert T.pool2d(x, "avg", 2).data[0, 0, 0] == 2.5


def test_pool2d_indivisible():
    with pytest.raises(ShapeError, match="not divisible"):
        T.pool2d(t(np.ones((1, 5, 4))), "max", 2)


# -- combine ---------------------------------------------------------------------


def test_combine_add_zeros():
    x = np.random.default_rng(1).standard_normal((2, 3))
    y = T.combine([t(x), t(np.zeros((2, 3)))], "add")
    assert np.array_equal(y.data, x)


def test_combine_concat_channel_shape_law():
    a = t(np.ones((2, 4, 4)))
    b = t(np.ones((3, 4, 4)))
    assert T.combine([a, b], "concat_channel").shape == (5, 4, 4)


def test_combine_mul_ones():
    x = np.random.default_rng(2).standard_normal((3, 2))
    y = T.combine([t(x), t(np.ones((3, 2)))], "mul")
    assert np.array_equal(y.data, x)


def test_combine_shape_mismatch():
    with pytest.raises(ShapeError):
        T.combine([t(np.ones((2, 2))), t(np.ones((3, 2)))], "add")


def test_stack_split_roundtrip_bitwise():
    rng = np.random.default_rng(3)
    parts = [rng.standard_normal((2, 3)) for _ in range(4)]
    stacked = T.combine([t(p) for p in parts], "stack_new_axis")
    for i, p in enumerate(parts):
        assert np.array_equal(stacked[i].data, p)


# -- backward ---------------------------------------------------------------------


def test_backward_linear_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = t(rng.standard_normal(3))

    def f(w):
        return T.linear(x, w, None).sum()

    report = gradcheck(f, t(rng.standard_normal((2, 3))))
    assert report.passed


def test_backward_unreached_param_zero_grad():
    p = t(np.ones(3), rg=True)
    q = t(np.ones(3), rg=True)
    loss = (q * q).sum()
    backward(loss, params=[p, q])
    assert np.array_equal(p.grad, np.zeros(3))
    assert np.array_equal(q.grad, 2 * np.ones(3))


def test_backward_twice_raises():
    p = t(np.ones(3), rg=True)
    loss = (p * p).sum()
    backward(loss)
    with pytest.raises(ContractError, match="twice"):
        backward(loss)


def test_backward_non_scalar_raises():
    p = t(np.ones(3), rg=True)
    with pytest.raises(ContractError, match="scalar"):
        backward(p * p)


def test_backward_accumulates_over_reuse():
    p = t([3.0], rg=True)
    loss = (p * p).sum() + (p * 2.0).sum()
    backward(loss)
    assert np.allclose(p.grad, [8.0])  # 2x + 2


# -- gradcheck ---------------------------------------------------------------------


def test_gradcheck_square():
    x = t([3.0], rg=True)

    def f(v):
        return (v * v).sum()

    # independent central difference at x=3: (f(3+h)-f(3-h))/2h = 6
    h = 1e-5 * 3.0
    numeric = ((3.0 + h) ** 2 - (3.0 - h) ** 2) / (2 * h)
    assert abs(numeric - 6.0) < 1e-6
    report = gradcheck(f, x)
    assert report.passed and report.max_rel_err < 1e-6


def test_gradcheck_constant():
    report = gradcheck(lambda v: (v * 0.0).sum(), t([1.0, 2.0]))
    assert report.passed


def test_gradcheck_negative_control():
    # an op whose hand-written gradient is deliberately 10% off must fail
    def bad_square(v):
        out = T._from_op(v.data * v.data, (v,), lambda g: (g * 2.2 * v.data,))
        return out.sum()

    report = gradcheck(bad_square, t([1.5, -0.7]))
    assert not report.passed


# -- per-op gradient sweep (10 seeds each) -------------------------------------------


OPS = [
    ("linear", lambda r: (lambda x, w, b: T.linear(x, w, b).sum(),
                          [r.standard_normal((4, 3)), r.standard_normal((2, 3)),
                           r.standard_normal(2)])),
    ("matmul", lambda r: (lambda a, b: T.matmul(a, b).sum(),
                          [r.standard_normal((3, 4)), r.standard_normal((4, 2))])),
    ("conv2d", lambda r: (lambda x, k, b: T.conv2d(x, k, b, padding=1).sum(),
                          [r.standard_normal((2, 4, 4)),
                           r.standard_normal((3, 2, 3, 3)), r.standard_normal(3)])),
    ("dwconv", lambda r: (lambda x, k: T.conv2d(x, k, None, padding=1,
                                                depthwise=True).sum(),
                          [r.standard_normal((2, 4, 4)),
                           r.standard_normal((2, 1, 3, 3))])),
    ("silu", lambda r: (lambda x: T.silu(x).sum(), [r.standard_normal((3, 3))])),
    ("relu", lambda r: (lambda x: T.relu(x).sum(), [r.standard_normal((3, 3)) + 0.1])),
    ("sigmoid", lambda r: (lambda x: T.sigmoid(x).sum(), [r.standard_normal((3, 3))])),
    ("softplus", lambda r: (lambda x: T.softplus(x).sum(), [r.standard_normal((3, 3))])),
    ("softmax", lambda r: (lambda x: (T.softmax(x) * T.softmax(x)).sum(),
                           [r.standard_normal((3, 4))])),
    ("layer_norm", lambda r: (lambda x, g, b: T.layer_norm(x, g, b).sum(),
                              [r.standard_normal((3, 4)),
                               1.0 + 0.1 * r.standard_normal(4),
                               r.standard_normal(4)])),
    ("pool_max", lambda r: (lambda x: T.pool2d(x, "max", 2).sum(),
                            [r.standard_normal((2, 4, 4))])),
    ("pool_avg", lambda r: (lambda x: T.pool2d(x, "avg", 2).sum(),
                            [r.standard_normal((2, 4, 4))])),
    ("upsample2x", lambda r: (lambda x: (T.upsample2x(x) * T.upsample2x(x)).sum(),
                              [r.standard_normal((2, 3, 3))])),
    ("mul", lambda r: (lambda a, b: (a * b).sum(),
                       [r.standard_normal((3, 3)), r.standard_normal((3, 3))])),
    ("div", lambda r: (lambda a, b: (a / b).sum(),
                       [r.standard_normal((3, 3)), 2.0 + r.uniform(0, 1, (3, 3))])),
    ("exp", lambda r: (lambda x: T.exp(x).sum(), [r.standard_normal((3, 3))])),
    ("log", lambda r: (lambda x: T.log(x).sum(), [0.5 + r.uniform(0, 1, (3, 3))])),
    ("abs", lambda r: (lambda x: T.absolute(x).sum(),
                       [r.standard_normal((3, 3)) + 0.2])),
    ("clip", lambda r: (lambda x: T.clip(x, -0.5, 0.5).sum(),
                        [r.standard_normal((3, 3)) * 2])),
    ("concat", lambda r: (lambda a, b: (T.concat([a, b], axis=0)
                                        * T.concat([a, b], axis=0)).sum(),
                          [r.standard_normal((2, 3)), r.standard_normal((1, 3))])),
    ("stack_mean", lambda r: (lambda a, b: T.stack([a, b], axis=0).mean(axis=0).sum(),
                              [r.standard_normal((2, 2)), r.standard_normal((2, 2))])),
    ("slice_flip", lambda r: (lambda x: (x[1:, :2].flip(0) * x[1:, :2].flip(0)).sum(),
                              [r.standard_normal((3, 3))])),
    ("transpose_reshape", lambda r: (lambda x: (x.transpose(1, 0).reshape(2, 6)
                                                * 1.5).sum(),
                                     [r.standard_normal((4, 3))])),
    ("expand", lambda r: (lambda x: (x.expand(3, 4) * x.expand(3, 4)).sum(),
                          [r.standard_normal((1, 4))])),
]


@pytest.mark.parametrize("name,make", OPS, ids=[o[0] for o in OPS])
def test_op_gradcheck_ten_seeds(name, make):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        f, arrays = make(rng)
        report = gradcheck(f, [t(a) for a in arrays], tol=1e-4)
        assert report.passed, f"{name} seed {seed}: {report}"


# -- misc contracts ----------------------------------------------------------------


def test_determinism_repeated_forward():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 8, 8))
    k = rng.standard_normal((4, 2, 3, 3))

    def run():
        return T.silu(T.conv2d(t(x), t(k), None, padding=1)).data

    assert np.array_equal(run(), run())


def test_finite_check_flag():
    T.FINITE_CHECKS = True
    try:
        with np.errstate(invalid="ignore"):
            with pytest.raises(ContractError, match="non-finite"):
                T.log(t([-1.0], rg=True))
    finally:
        T.FINITE_CHECKS = False


def test_no_implicit_broadcast():
    with pytest.raises(ShapeError):
        t(np.ones((2, 3))) + t(np.ones((3,)))
    with pytest.raises(ShapeError):
        t(np.ones((2, 3))) * t(np.ones((2, 1)))


def test_gradcheck_requires_f64():
    from lfsamba.precision import set_precision

    set_precision("f32")
    try:
        with pytest.raises(ContractError, match="f64"):
            gradcheck(lambda v: (v * v).sum(), t([1.0]))
    finally:
        set_precision("f64")
