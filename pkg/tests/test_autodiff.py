"""Graph construction and finite-difference verification of every primitive."""

import numpy as np
import pytest

from vton import autodiff as ad

TOL = 1e-5


def _check(f, params, step=1e-5):
    err = ad.grad_check(f, params, step=step)
    assert err < TOL, f"max relative error {err}"


def test_add_mul_chain(rng):
    for shape in [(3,), (2, 4), (2, 3, 4)]:
        x = rng.normal(size=shape)
        y = rng.normal(size=shape)
        _check(lambda p: ad.sum_all(p["x"] * p["y"] + p["x"]), {"x": x, "y": y})


def test_scalar_ops(rng):
    x = rng.normal(size=(3, 3))
    _check(lambda p: ad.mean_all(ad.scale(p["x"], 2.5) - 1.0), {"x": x})
    _check(lambda p: ad.sum_all(1.0 - p["x"]), {"x": x})


def test_matmul_shapes(rng):
    for m, k, n in [(1, 1, 1), (2, 3, 4), (5, 2, 3), (1, 6, 2)]:
        a = rng.normal(size=(m, k))
        b = rng.normal(size=(k, n))
        _check(lambda p: ad.sum_all(ad.absval(p["a"] @ p["b"])), {"a": a, "b": b})


def test_softmax_rows(rng):
    for shape in [(1, 2), (3, 5), (4, 4)]:
        a = rng.normal(size=shape)
        w = rng.normal(size=shape)
        _check(lambda p: ad.sum_all(ad.softmax_rows(p["a"]) * w), {"a": a})


def test_conv2d(rng):
    for cin, h, w, cout, k, stride, pad in [
            (1, 4, 4, 1, 3, 1, 1), (2, 5, 6, 3, 3, 2, 1),
            (3, 4, 4, 2, 1, 1, 0), (1, 7, 5, 2, 5, 2, 2)]:
        x = rng.normal(size=(cin, h, w))
        wt = rng.normal(size=(cout, cin, k, k))
        b = rng.normal(size=cout)
        _check(lambda p: ad.sum_all(ad.absval(
            ad.conv2d(p["x"], p["w"], p["b"], stride, pad))),
            {"x": x, "w": wt, "b": b})


def test_grid_sample(rng):
    for c, h, w, hg, wg in [(1, 4, 4, 3, 3), (2, 5, 6, 4, 4), (3, 6, 5, 2, 6)]:
        x = rng.normal(size=(c, h, w))
        # keep coordinates away from exact cell boundaries (bilinear kinks)
        grid = rng.uniform(-0.9, 0.9, (2, hg, wg)) + 0.013
        wgt = rng.normal(size=(c, hg, wg))
        _check(lambda p: ad.sum_all(ad.grid_sample(p["x"], p["g"]) * wgt),
               {"x": x, "g": grid}, step=1e-6)


def test_reshape_permute_concat_crop(rng):
    x = rng.normal(size=(2, 3, 4))
    y = rng.normal(size=(1, 3, 4))

    def f(p):
        cat = ad.concat_channels([p["x"], p["y"]])
        cut = ad.crop(cat, (0, 2), (1, 3), (0, 3))
        return ad.sum_all(ad.permute(ad.reshape(cut, (2, 6)), (1, 0)))

    _check(f, {"x": x, "y": y})


def test_reductions_and_abs(rng):
    x = rng.normal(size=(3, 4)) + 3.0  # away from the |.| kink
    _check(lambda p: ad.mean_all(ad.absval(p["x"])), {"x": x})
    _check(lambda p: ad.sum_all(p["x"] * p["x"]), {"x": x})


def test_activations(rng):
    x = rng.normal(size=(2, 3, 3)) + 0.05
    for op in (ad.leaky_relu, ad.relu, ad.tanh, ad.sigmoid):
        _check(lambda p: ad.sum_all(op(p["x"])), {"x": x}, step=1e-6)


def test_upsample(rng):
    x = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(2, 6, 8))
    _check(lambda p: ad.sum_all(ad.upsample_nearest2(p["x"]) * w), {"x": x})


# --- engine semantics -------------------------------------------------------

def test_backward_twice_doubles(rng):
    x = ad.parameter(rng.normal(size=(3, 3)), "x")
    loss = ad.sum_all(x * x)
    ad.backward(loss)
    once = x.grad.copy()
    loss2 = ad.sum_all(x * x)
    ad.backward(loss2)
    np.testing.assert_allclose(x.grad, 2 * once, atol=1e-12)


def test_backward_requires_scalar(rng):
    x = ad.parameter(rng.normal(size=(2, 2)), "x")
    with pytest.raises(ValueError):
        ad.backward(x * x)


def test_shared_subexpression_accumulates(rng):
    x = ad.parameter(np.array([2.0, 3.0]), "x")
    y = x * x
    loss = ad.sum_all(y + y)
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, 4 * x.value, atol=1e-12)


def test_zero_grad():
    x = ad.parameter(np.array([1.0]), "x")
    ad.backward(ad.sum_all(x * x))
    assert x.grad[0] != 0
    x.zero_grad()
    assert x.grad[0] == 0


def test_node_repr_and_shape():
    n = ad.constant(np.zeros((2, 3)))
    assert n.shape == (2, 3)
    assert "2, 3" in repr(n)
