"""Dense float64 tensor operations.

Tensors are plain contiguous ``numpy.ndarray`` values of dtype float64;
these functions add the shape checking and the exact semantics the rest
of the package relies on (stabilized softmax, zero-extension sampling,
cross-correlation convolution). All functions are pure.
"""

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ArgumentError(ValueError):
    """An argument violates an operation precondition."""


class FormatError(ValueError):
    """A serialized tensor/checkpoint is malformed."""


def as_tensor(a) -> np.ndarray:
    t = np.ascontiguousarray(a, dtype=np.float64)
    return t


def check_finite(t: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise ArgumentError(f"{what} contains NaN/Inf")
    return t


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(a: np.ndarray) -> np.ndarray:
    if a.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {a.shape}")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def conv2d(x, weight, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-d cross-correlation over a C,H,W tensor with zero padding."""
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects CHW input and OIKK weight, got {x.shape}, {weight.shape}")
    cout, cin, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd side, got {k}x{k2}")
    if cin != x.shape[0]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[0]}, weight expects {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias shape {bias.shape} != ({cout},)")
    ho = (x.shape[1] + 2 * padding - k) // stride + 1
    wo = (x.shape[2] + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be {ho}x{wo} for input {x.shape}")
    return kernels.conv2d_forward(as_tensor(x), as_tensor(weight), as_tensor(bias), stride, padding)


def grid_sample(x, grid) -> np.ndarray:
    """Bilinear sampling of ``x`` at normalized grid coordinates.

    ``grid`` is (2, Hg, Wg): channel 0 holds x coordinates, channel 1
    y coordinates, with (-1,-1) the top-left pixel center and (+1,+1)
    the bottom-right. Samples outside the image read as zero.
    """
    if x.ndim != 3:
        raise ShapeError(f"grid_sample expects CHW input, got {x.shape}")
    if grid.ndim != 3 or grid.shape[0] != 2:
        raise ShapeError(f"grid must be (2,Hg,Wg), got {grid.shape}")
    return kernels.grid_sample_forward(as_tensor(x), as_tensor(grid))


def _binary_shapes(a, b):
    if np.isscalar(a) or np.isscalar(b):
        return
    if a.shape != b.shape:
        raise ShapeError(f"elementwise shapes differ: {a.shape} vs {b.shape}")


def add(a, b):
    _binary_shapes(a, b)
    return np.asarray(a + b, dtype=np.float64)


def sub(a, b):
    _binary_shapes(a, b)
    return np.asarray(a - b, dtype=np.float64)


def mul(a, b):
    _binary_shapes(a, b)
    return np.asarray(a * b, dtype=np.float64)


def reshape(a: np.ndarray, shape) -> np.ndarray:
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} ({a.size} elements) to {tuple(shape)}")
    return np.ascontiguousarray(a.reshape(shape))


def permute(a: np.ndarray, axes) -> np.ndarray:
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"invalid permutation {tuple(axes)} for rank {a.ndim}")
    return np.ascontiguousarray(a.transpose(axes))


def concat_channels(parts) -> np.ndarray:
    if not parts:
        raise ArgumentError("concat_channels needs at least one part")
    hw = parts[0].shape[1:]
    for p in parts:
        if p.ndim != 3 or p.shape[1:] != hw:
            raise ShapeError(f"concat spatial mismatch: {p.shape} vs (*,{hw[0]},{hw[1]})")
    return np.ascontiguousarray(np.concatenate(parts, axis=0))


def reduce_sum(a: np.ndarray) -> float:
    if a.size == 0:
        raise ArgumentError("reduce over empty tensor")
    return float(a.sum())


def reduce_mean(a: np.ndarray) -> float:
    if a.size == 0:
        raise ArgumentError("reduce over empty tensor")
    return float(a.mean())


def reduce_abs_sum(a: np.ndarray) -> float:
    if a.size == 0:
        raise ArgumentError("reduce over empty tensor")
    return float(np.abs(a).sum())


# --- raw tensor wire format -------------------------------------------------
# magic "HCAT", u32-le rank, rank x u32-le dims, prod(dims) x f64-le values.

MAGIC = b"HCAT"


def tensor_to_bytes(t: np.ndarray) -> bytes:
    # check rank before as_tensor, which promotes 0-d arrays to 1-d
    if np.asarray(t).ndim < 1:
        raise FormatError("tensor format requires rank >= 1")
    t = as_tensor(t)
    if t.ndim < 1:
        raise FormatError("tensor format requires rank >= 1")
    header = MAGIC + np.uint32(t.ndim).tobytes()
    dims = np.asarray(t.shape, dtype="<u4").tobytes()
    return header + dims + t.astype("<f8").tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0):
    """Decode one tensor; returns (array, offset past the tensor)."""
    if buf[offset : offset + 4] != MAGIC:
        raise FormatError(f"bad magic at byte {offset}")
    pos = offset + 4
    if len(buf) < pos + 4:
        raise FormatError(f"truncated rank field at byte {pos}")
    rank = int(np.frombuffer(buf, "<u4", 1, pos)[0])
    pos += 4
    if rank < 1:
        raise FormatError(f"rank {rank} < 1 at byte {offset + 4}")
    if len(buf) < pos + 4 * rank:
        raise FormatError(f"truncated dims at byte {pos}")
    dims = np.frombuffer(buf, "<u4", rank, pos).astype(np.int64)
    pos += 4 * rank
    count = int(np.prod(dims))
    if len(buf) < pos + 8 * count:
        raise FormatError(f"truncated data at byte {pos}: need {8 * count} bytes")
    data = np.frombuffer(buf, "<f8", count, pos).reshape(dims)
    # frombuffer views are read-only; copy so callers can update in place
    return data.copy(), pos + 8 * count
