"""Learned sub-networks: feature extractors, warp-parameter regressor, U-Net.

Parameters live in a flat ordered dict of name -> float64 array. Forward
functions take a matching dict of graph Nodes (see ``bind``) so the same
code serves inference and training.
"""

import struct

import numpy as np

from . import autodiff as ad
from .tensor import FormatError, ShapeError, tensor_from_bytes, tensor_to_bytes

LEAKY_SLOPE = 0.2


def bind(params: dict, trainable=True, frozen_prefixes=()) -> dict:
    """Wrap a parameter dict into graph Nodes, one per array."""
    out = {}
    for name, value in params.items():
        train = trainable and not any(name.startswith(p) for p in frozen_prefixes)
        out[name] = ad.Node(value, trainable=train, name=name)
    return out


def init_conv(params: dict, rng, name: str, cin: int, cout: int, k: int = 3):
    """Kaiming-uniform fan-in weights, zero bias."""
    bound = np.sqrt(6.0 / (cin * k * k))
    params[f"{name}.weight"] = rng.uniform(-bound, bound, (cout, cin, k, k))
    params[f"{name}.bias"] = np.zeros(cout)


def init_dense(params: dict, rng, name: str, nin: int, nout: int):
    bound = np.sqrt(6.0 / nin)
    params[f"{name}.weight"] = rng.uniform(-bound, bound, (nin, nout))
    params[f"{name}.bias"] = np.zeros(nout)


def conv(pn: dict, name: str, x: ad.Node, stride=1, padding=1) -> ad.Node:
    return ad.conv2d(x, pn[f"{name}.weight"], pn[f"{name}.bias"], stride, padding)


def dense(pn: dict, name: str, x: ad.Node) -> ad.Node:
    flat = ad.reshape(x, (1, x.value.size))
    bias = pn[f"{name}.bias"]
    out = ad.matmul(flat, pn[f"{name}.weight"]) + ad.reshape(bias, (1, bias.value.size))
    return ad.reshape(out, (out.value.size,))


# --- feature extractor ------------------------------------------------------

def init_extractor(params: dict, rng, prefix: str, in_ch: int, f: int):
    init_conv(params, rng, f"{prefix}.conv0", in_ch, f)
    init_conv(params, rng, f"{prefix}.conv1", f, f)
    init_conv(params, rng, f"{prefix}.conv2", f, f)
    init_conv(params, rng, f"{prefix}.conv3", f, f)


def extractor_forward(pn: dict, prefix: str, x: ad.Node) -> ad.Node:
    """Two stride-2 convs then two stride-1 convs; spatial dims quartered."""
    _, h, w = x.shape
    if h % 4 or w % 4:
        raise ShapeError(f"extractor input {h}x{w} must be divisible by 4")
    x = ad.leaky_relu(conv(pn, f"{prefix}.conv0", x, stride=2), LEAKY_SLOPE)
    x = ad.leaky_relu(conv(pn, f"{prefix}.conv1", x, stride=2), LEAKY_SLOPE)
    x = ad.leaky_relu(conv(pn, f"{prefix}.conv2", x), LEAKY_SLOPE)
    x = ad.leaky_relu(conv(pn, f"{prefix}.conv3", x), LEAKY_SLOPE)
    return x


# --- warp-parameter regressor ----------------------------------------------

def _regressor_plan(h: int, w: int):
    """Spatial sizes after each stride-2 stage, down to at most 4x4."""
    if h < 4 or w < 4:
        raise ShapeError(f"regressor input {h}x{w} too small (needs >= 4x4)")
    sizes = []
    while h > 4 or w > 4:
        h = (h + 1) // 2
        w = (w + 1) // 2
        sizes.append((h, w))
    return sizes


def init_regressor(params: dict, rng, prefix: str, f: int, h: int, w: int, tps_k: int):
    sizes = _regressor_plan(h, w)
    for i in range(len(sizes)):
        init_conv(params, rng, f"{prefix}.conv{i}", f, f)
    fh, fw = sizes[-1] if sizes else (h, w)
    init_dense(params, rng, f"{prefix}.head", f * fh * fw, 2 * tps_k * tps_k)


def regressor_forward(pn: dict, prefix: str, x: ad.Node) -> ad.Node:
    """Collapse a feature map to 2*k^2 warp offsets, each in (-1,1)."""
    _, h, w = x.shape
    n_down = len(_regressor_plan(h, w))
    for i in range(n_down):
        x = ad.leaky_relu(conv(pn, f"{prefix}.conv{i}", x, stride=2), LEAKY_SLOPE)
    return ad.tanh(dense(pn, f"{prefix}.head", x))


# --- U-Net ------------------------------------------------------------------

def _unet_widths(base: int, depth: int):
    return [min(base * (2 ** i), base * 8) for i in range(depth)]


def init_unet(params: dict, rng, prefix: str, in_ch: int, base: int, depth: int):
    widths = _unet_widths(base, depth)
    prev = in_ch
    for i, wd in enumerate(widths):
        init_conv(params, rng, f"{prefix}.enc{i}", prev, wd)
        init_conv(params, rng, f"{prefix}.down{i}", wd, wd)
        prev = wd
    init_conv(params, rng, f"{prefix}.mid", prev, prev)
    cur = prev
    for i in reversed(range(depth)):
        init_conv(params, rng, f"{prefix}.dec{i}", cur + widths[i], widths[i])
        cur = widths[i]
    init_conv(params, rng, f"{prefix}.head", widths[0], 4, k=1)


def unet_forward(pn: dict, prefix: str, x: ad.Node, depth: int, zero_skips=False):
    """Encoder-decoder with skip connections.

    Returns (rendered, mask): 3 channels through tanh rescaled to [0,1]
    and 1 sigmoid channel.
    """
    _, h, w = x.shape
    if h % (2 ** depth) or w % (2 ** depth):
        raise ShapeError(f"U-Net input {h}x{w} must be divisible by {2 ** depth}")
    skips = []
    cur = x
    for i in range(depth):
        cur = ad.leaky_relu(conv(pn, f"{prefix}.enc{i}", cur), LEAKY_SLOPE)
        skips.append(cur)
        cur = ad.leaky_relu(conv(pn, f"{prefix}.down{i}", cur, stride=2), LEAKY_SLOPE)
    cur = ad.leaky_relu(conv(pn, f"{prefix}.mid", cur), LEAKY_SLOPE)
    for i in reversed(range(depth)):
        cur = ad.upsample_nearest2(cur)
        skip = skips[i]
        if zero_skips:
            skip = ad.scale(skip, 0.0)
        cur = ad.concat_channels([cur, skip])
        cur = ad.leaky_relu(conv(pn, f"{prefix}.dec{i}", cur), LEAKY_SLOPE)
    out = conv(pn, f"{prefix}.head", cur, padding=0)
    rendered = ad.scale(ad.tanh(ad.channels(out, 0, 3)) + 1.0, 0.5)
    mask = ad.sigmoid(ad.channels(out, 3, 4))
    return rendered, mask


# --- checkpoints ------------------------------------------------------------
# magic "HCAC", u32-le count, then per parameter:
#   u16-le name length, UTF-8 name, tensor in the raw tensor format.

CKPT_MAGIC = b"HCAC"


def checkpoint_to_bytes(params: dict) -> bytes:
    chunks = [CKPT_MAGIC, struct.pack("<I", len(params))]
    for name, value in params.items():
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(tensor_to_bytes(value))
    return b"".join(chunks)


def checkpoint_from_bytes(buf: bytes) -> dict:
    if buf[:4] != CKPT_MAGIC:
        raise FormatError("bad checkpoint magic at byte 0")
    (count,) = struct.unpack_from("<I", buf, 4)
    pos = 8
    params = {}
    for _ in range(count):
        if len(buf) < pos + 2:
            raise FormatError(f"truncated name length at byte {pos}")
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        params[name], pos = tensor_from_bytes(buf, pos)
    return params


def save_checkpoint(path, params: dict):
    with open(path, "wb") as fh:
        fh.write(checkpoint_to_bytes(params))


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())
