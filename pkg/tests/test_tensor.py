"""Dense tensor ops and the raw tensor wire format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vton import tensor
from vton.tensor import ArgumentError, FormatError, ShapeError


def test_matmul_matches_numpy(rng):
    a = rng.normal(size=(4, 6))
    b = rng.normal(size=(6, 3))
    np.testing.assert_allclose(tensor.matmul(a, b), a @ b)


def test_matmul_shape_error(rng):
    with pytest.raises(ShapeError):
        tensor.matmul(rng.normal(size=(2, 3)), rng.normal(size=(4, 2)))


def test_softmax_rows_sum_to_one(rng):
    y = tensor.softmax_rows(rng.normal(size=(7, 9)) * 10)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
    assert (y > 0).all()


def test_softmax_rows_large_values_stable():
    y = tensor.softmax_rows(np.array([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(y, [[0.5, 0.5, 0.0]], atol=1e-12)


def test_softmax_shift_invariance(rng):
    a = rng.normal(size=(3, 5))
    np.testing.assert_allclose(tensor.softmax_rows(a),
                               tensor.softmax_rows(a + 3.7), atol=1e-12)


def test_conv2d_identity_kernel(rng):
    x = rng.normal(size=(2, 5, 6))
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = 1.0
    w[1, 1, 1, 1] = 1.0
    out = tensor.conv2d(x, w, np.zeros(2), stride=1, padding=1)
    np.testing.assert_allclose(out, x, atol=1e-14)


def test_conv2d_even_kernel_rejected(rng):
    with pytest.raises(ShapeError):
        tensor.conv2d(rng.normal(size=(1, 4, 4)),
                      rng.normal(size=(1, 1, 2, 2)), np.zeros(1))


def test_conv2d_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        tensor.conv2d(rng.normal(size=(3, 4, 4)),
                      rng.normal(size=(1, 2, 3, 3)), np.zeros(1))


def test_grid_sample_constant_image_inside(rng):
    x = np.full((2, 6, 8), 3.25)
    grid = np.ascontiguousarray(rng.uniform(-0.99, 0.99, (2, 5, 5)))
    np.testing.assert_allclose(tensor.grid_sample(x, grid), 3.25, atol=1e-12)


def test_grid_sample_far_outside_is_zero():
    x = np.ones((1, 4, 4))
    grid = np.full((2, 3, 3), 5.0)
    np.testing.assert_allclose(tensor.grid_sample(x, grid), 0.0)


def test_elementwise_scalar_and_shape(rng):
    a = rng.normal(size=(2, 3))
    np.testing.assert_allclose(tensor.add(a, 2.0), a + 2.0)
    np.testing.assert_allclose(tensor.mul(a, a), a * a)
    with pytest.raises(ShapeError):
        tensor.sub(a, rng.normal(size=(3, 2)))


def test_concat_channels(rng):
    a = rng.normal(size=(2, 4, 5))
    b = rng.normal(size=(3, 4, 5))
    out = tensor.concat_channels([a, b])
    assert out.shape == (5, 4, 5)
    np.testing.assert_allclose(out[:2], a)
    with pytest.raises(ShapeError):
        tensor.concat_channels([a, rng.normal(size=(1, 3, 5))])


def test_reduce_empty_rejected():
    with pytest.raises(ArgumentError):
        tensor.reduce_mean(np.zeros((0, 3)))


def test_check_finite():
    with pytest.raises(ArgumentError):
        tensor.check_finite(np.array([1.0, np.nan]))


# --- wire format ------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2**31))
def test_tensor_roundtrip(shape, seed):
    t = np.random.default_rng(seed).normal(size=shape)
    back, end = tensor.tensor_from_bytes(tensor.tensor_to_bytes(t))
    assert back.shape == t.shape
    assert back.tobytes() == t.tobytes()  # bit exact
    assert end == len(tensor.tensor_to_bytes(t))


def test_tensor_rank0_rejected():
    with pytest.raises(FormatError):
        tensor.tensor_to_bytes(np.float64(3.0))


def test_tensor_bad_magic():
    buf = b"XXXX" + tensor.tensor_to_bytes(np.zeros(3))[4:]
    with pytest.raises(FormatError, match="byte 0"):
        tensor.tensor_from_bytes(buf)


def test_tensor_truncated_data():
    buf = tensor.tensor_to_bytes(np.zeros(3))[:-4]
    with pytest.raises(FormatError, match="truncated"):
        tensor.tensor_from_bytes(buf)


def test_tensor_offset_decoding(rng):
    a = rng.normal(size=(2, 2))
    b = rng.normal(size=5)
    buf = tensor.tensor_to_bytes(a) + tensor.tensor_to_bytes(b)
    first, pos = tensor.tensor_from_bytes(buf)
    second, end = tensor.tensor_from_bytes(buf, pos)
    np.testing.assert_array_equal(first, a)
    np.testing.assert_array_equal(second, b)
    assert end == len(buf)
