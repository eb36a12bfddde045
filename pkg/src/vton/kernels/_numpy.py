"""Pure-numpy kernel implementations (fallback backend).

Vectorized with stride tricks rather than loops; results must agree with
the numba backend to float64 round-off.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b, stride, pad):
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    # win: (cin, ho, wo, k, k)
    out = np.einsum("cijmn,ocmn->oij", win, w, optimize=True)
    return out + b[:, None, None]


def conv2d_backward(x, w, stride, pad, gout):
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    _, ho, wo = gout.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    gw = np.einsum("cijmn,oij->ocmn", win, gout, optimize=True)
    gb = gout.sum(axis=(1, 2))
    gxp = np.zeros_like(xp)
    for ki in range(k):
        for kj in range(k):
            contrib = np.einsum("oij,oc->cij", gout, w[:, :, ki, kj], optimize=True)
            gxp[:, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += contrib
    if pad:
        gx = gxp[:, pad:-pad, pad:-pad]
    else:
        gx = gxp
    return np.ascontiguousarray(gx), gw, gb


def _sample_coords(grid, h, w):
    fx = (grid[0] + 1.0) * 0.5 * (w - 1)
    fy = (grid[1] + 1.0) * 0.5 * (h - 1)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    ax = fx - x0
    ay = fy - y0
    return x0, y0, ax, ay


def _gather(x, yy, xx):
    """Fetch x[:, yy, xx] with zero extension outside the image."""
    c, h, w = x.shape
    inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
    ys = np.clip(yy, 0, h - 1)
    xs = np.clip(xx, 0, w - 1)
    vals = x[:, ys, xs]
    vals[:, ~inside] = 0.0
    return vals, inside


def grid_sample_forward(x, grid):
    c, h, w = x.shape
    x0, y0, ax, ay = _sample_coords(grid, h, w)
    out = np.zeros((c,) + grid.shape[1:], dtype=np.float64)
    for dy, dx, wt in (
        (0, 0, (1 - ay) * (1 - ax)),
        (0, 1, (1 - ay) * ax),
        (1, 0, ay * (1 - ax)),
        (1, 1, ay * ax),
    ):
        vals, _ = _gather(x, y0 + dy, x0 + dx)
        out += wt[None] * vals
    return out


def grid_sample_backward(x, grid, gout):
    c, h, w = x.shape
    x0, y0, ax, ay = _sample_coords(grid, h, w)
    gx_img = np.zeros_like(x)
    dfx = np.zeros(grid.shape[1:], dtype=np.float64)
    dfy = np.zeros(grid.shape[1:], dtype=np.float64)
    corners = (
        (0, 0, (1 - ay) * (1 - ax), -(1 - ay), -(1 - ax)),
        (0, 1, (1 - ay) * ax, (1 - ay), -ax),
        (1, 0, ay * (1 - ax), -ay, (1 - ax)),
        (1, 1, ay * ax, ay, ax),
    )
    for dy, dx, wt, dwdx, dwdy in corners:
        yy = y0 + dy
        xx = x0 + dx
        vals, inside = _gather(x, yy, xx)
        gdot = (gout * vals).sum(axis=0)
        dfx += dwdx * gdot
        dfy += dwdy * gdot
        ys = yy[inside]
        xs = xx[inside]
        np.add.at(gx_img, (slice(None), ys, xs), (gout * wt[None])[:, inside])
    ggrid = np.stack([dfx * 0.5 * (w - 1), dfy * 0.5 * (h - 1)])
    return gx_img, ggrid
