import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hrne.errors import ConfigError, NumericError, ShapeError
from hrne.numerics import (ParamSet, ParamTensor, activation, activation_grad, affine, affine_backward,
                           finite_diff_grad, make_rng, max_relative_error, param_init, softmax)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_affine_identity():
    assert np.allclose(affine(np.eye(2), [3.0, 4.0], [0.0, 0.0]), [3, 4])


def test_affine_forced():
    assert np.array_equal(affine([[1, 2], [3, 4]], [1, 1], [1, 0]), [4, 7])


def test_affine_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2,\)"):
        affine(np.zeros((2, 3)), np.zeros(2), np.zeros(2))
    with pytest.raises(ShapeError):
        affine(np.zeros((2, 3)), np.zeros(3), np.zeros(3))


def test_affine_gradient_matches_finite_differences(rng):
    W, x, b = rng.standard_normal((3, 4)), rng.standard_normal(4), rng.standard_normal(3)
    r = rng.standard_normal(3)
    params = {"W": W, "x": x, "b": b}
    numeric = finite_diff_grad(lambda: float(r @ affine(W, x, b)), params, eps=1e-5)
    dW, dx, db = affine_backward(r, W, x)
    assert max_relative_error(dW, numeric["W"]) < 1e-6
    assert max_relative_error(dx, numeric["x"]) < 1e-6
    assert max_relative_error(db, numeric["b"]) < 1e-6


@settings(max_examples=50, deadline=None)
@given(a=finite, b=finite, seed=st.integers(0, 2**32 - 1))
def test_affine_is_linear(a, b, seed):
    rng = make_rng(seed)
    W = rng.standard_normal((3, 5))
    x, y = rng.standard_normal(5), rng.standard_normal(5)
    zero = np.zeros(3)
    lhs = affine(W, a * x + b * y, zero)
    rhs = a * affine(W, x, zero) + b * affine(W, y, zero)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_softmax_examples():
    assert np.allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3)
    assert np.allclose(softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6])
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0) and p[1] < 1e-300


def test_softmax_empty():
    with pytest.raises(ShapeError):
        softmax([])


@settings(max_examples=100, deadline=None)
@given(v=arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)), c=st.floats(-100, 100))
def test_softmax_shift_invariant_and_normalized(v, c):
    p = softmax(v)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) <= 1e-6
    assert np.max(np.abs(softmax(v + c) - p)) <= 1e-9


def test_activation_examples():
    assert activation("sigmoid", [0.0])[0] == 0.5
    assert activation("tanh", [0.0])[0] == 0.0
    hi, lo = activation("sigmoid", [50.0, -50.0])
    assert hi == pytest.approx(1.0) and lo == pytest.approx(0.0, abs=1e-20)
    assert np.isfinite(hi) and np.isfinite(lo)
    assert np.all(np.isfinite(activation("sigmoid", [-800.0, 800.0])))


def test_activation_rejects_non_finite():
    with pytest.raises(NumericError):
        activation("tanh", [np.nan])
    with pytest.raises(ConfigError):
        activation("relu", [0.0])


@pytest.mark.parametrize("kind", ["sigmoid", "tanh"])
def test_activation_derivative(kind, rng):
    v = rng.uniform(-4, 4, 25)
    h = 1e-5
    numeric = (activation(kind, v + h) - activation(kind, v - h)) / (2 * h)
    assert np.max(np.abs(activation_grad(kind, v) - numeric)) < 1e-8


def test_param_init():
    a = param_init(make_rng(5), (4, 3), 0.08)
    b = param_init(make_rng(5), (4, 3), 0.08)
    c = param_init(make_rng(6), (4, 3), 0.08)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 0.08)
    assert not np.array_equal(a, c)
    for bad in (0.0, -1.0):
        with pytest.raises(ConfigError):
            param_init(make_rng(0), (2,), bad)


def test_finite_diff_examples():
    x = {"x": np.array([3.0])}
    g = finite_diff_grad(lambda: float(x["x"][0] ** 2), x)
    assert abs(g["x"][0] - 6.0) < 1e-7
    y = {"y": np.linspace(-2, 2, 7)}
    g = finite_diff_grad(lambda: float(np.sum(np.sin(y["y"]))), y)
    assert np.max(np.abs(g["y"] - np.cos(y["y"]))) < 1e-8
    # parameters are restored
    assert np.array_equal(y["y"], np.linspace(-2, 2, 7))


def test_finite_diff_errors():
    x = {"x": np.array([0.0])}
    with pytest.raises(NumericError):
        finite_diff_grad(lambda: math.inf, x)
    with pytest.raises(ConfigError):
        finite_diff_grad(lambda: 0.0, x, eps=0.0)


def test_relative_error_floor():
    assert max_relative_error(np.array([0.0]), np.array([0.0])) == 0.0
    assert max_relative_error(np.array([1e-10]), np.array([0.0])) == pytest.approx(1e-2)


def test_param_set_names_and_grads():
    ps = ParamSet({"a": np.zeros((2, 3)), "b": np.ones(4)})
    assert list(ps) == ["a", "b"]
    with pytest.raises(ConfigError):
        ps.add("a", np.zeros(1))
    ps.accumulate({"a": np.ones((2, 3))})
    ps.accumulate({"a": np.ones((2, 3))})
    assert np.array_equal(ps.tensor("a").grad, 2 * np.ones((2, 3)))
    ps.zero_grad()
    assert not ps.tensor("a").grad.any()
    with pytest.raises(ShapeError):
        ps["b"] = np.zeros(5)
    with pytest.raises(ShapeError):
        ParamTensor("t", np.zeros(2), np.zeros(3))
