"""Numba-jitted kernel implementations (default backend).

Plain nested loops; @njit(cache=True) so the compile cost is paid once
per machine, not once per process.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _col_range(kj, pad, stride, wd, wo):
    """Output column range whose input column j*stride+kj-pad is in bounds."""
    jlo = (pad - kj + stride - 1) // stride
    if jlo < 0:
        jlo = 0
    jhi = (wd - 1 + pad - kj) // stride
    if jhi > wo - 1:
        jhi = wo - 1
    return jlo, jhi


@njit(cache=True)
def _im2col(x, k, stride, pad, ho, wo):
    """(cin*k*k, ho*wo) patch matrix with zero extension."""
    cin, h, wd = x.shape
    cols = np.zeros((cin * k * k, ho * wo), dtype=np.float64)
    for ci in range(cin):
        for ki in range(k):
            for kj in range(k):
                row = (ci * k + ki) * k + kj
                for i in range(ho):
                    yy = i * stride + ki - pad
                    if yy < 0 or yy >= h:
                        continue
                    xrow = x[ci, yy]
                    jlo, jhi = _col_range(kj, pad, stride, wd, wo)
                    off = kj - pad
                    base = i * wo
                    for j in range(jlo, jhi + 1):
                        cols[row, base + j] = xrow[j * stride + off]
    return cols


@njit(cache=True)
def conv2d_forward(x, w, b, stride, pad):
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    cols = _im2col(x, k, stride, pad, ho, wo)
    w2 = np.ascontiguousarray(w.reshape(cout, cin * k * k))
    out = np.dot(w2, cols).reshape(cout, ho, wo)
    for co in range(cout):
        out[co] += b[co]
    return out


@njit(cache=True)
def conv2d_backward(x, w, stride, pad, gout):
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    _, ho, wo = gout.shape
    g2 = np.ascontiguousarray(gout.reshape(cout, ho * wo))
    cols = _im2col(x, k, stride, pad, ho, wo)
    gw = np.dot(g2, cols.T).reshape(w.shape).copy()
    gb = np.empty(cout, dtype=np.float64)
    for co in range(cout):
        gb[co] = g2[co].sum()
    w2 = np.ascontiguousarray(w.reshape(cout, cin * k * k))
    gcols = np.dot(w2.T, g2)
    # col2im scatter back onto the input
    gx = np.zeros_like(x)
    for ci in range(cin):
        for ki in range(k):
            for kj in range(k):
                row = (ci * k + ki) * k + kj
                for i in range(ho):
                    yy = i * stride + ki - pad
                    if yy < 0 or yy >= h:
                        continue
                    gxrow = gx[ci, yy]
                    jlo, jhi = _col_range(kj, pad, stride, wd, wo)
                    off = kj - pad
                    base = i * wo
                    for j in range(jlo, jhi + 1):
                        gxrow[j * stride + off] += gcols[row, base + j]
    return gx, gw, gb


@njit(cache=True, inline="always")
def _pix(x, ci, yy, xx, h, w):
    if yy < 0 or yy >= h or xx < 0 or xx >= w:
        return 0.0
    return x[ci, yy, xx]


@njit(cache=True)
def grid_sample_forward(x, grid):
    c, h, w = x.shape
    _, hg, wg = grid.shape
    out = np.empty((c, hg, wg), dtype=np.float64)
    for i in range(hg):
        for j in range(wg):
            fx = (grid[0, i, j] + 1.0) * 0.5 * (w - 1)
            fy = (grid[1, i, j] + 1.0) * 0.5 * (h - 1)
            x0 = int(np.floor(fx))
            y0 = int(np.floor(fy))
            ax = fx - x0
            ay = fy - y0
            for ci in range(c):
                v00 = _pix(x, ci, y0, x0, h, w)
                v01 = _pix(x, ci, y0, x0 + 1, h, w)
                v10 = _pix(x, ci, y0 + 1, x0, h, w)
                v11 = _pix(x, ci, y0 + 1, x0 + 1, h, w)
                out[ci, i, j] = (
                    (1 - ay) * ((1 - ax) * v00 + ax * v01)
                    + ay * ((1 - ax) * v10 + ax * v11)
                )
    return out


@njit(cache=True)
def grid_sample_backward(x, grid, gout):
    c, h, w = x.shape
    _, hg, wg = grid.shape
    gx_img = np.zeros_like(x)
    ggrid = np.zeros_like(grid)
    for i in range(hg):
        for j in range(wg):
            fx = (grid[0, i, j] + 1.0) * 0.5 * (w - 1)
            fy = (grid[1, i, j] + 1.0) * 0.5 * (h - 1)
            x0 = int(np.floor(fx))
            y0 = int(np.floor(fy))
            ax = fx - x0
            ay = fy - y0
            dfx = 0.0
            dfy = 0.0
            for ci in range(c):
                g = gout[ci, i, j]
                v00 = _pix(x, ci, y0, x0, h, w)
                v01 = _pix(x, ci, y0, x0 + 1, h, w)
                v10 = _pix(x, ci, y0 + 1, x0, h, w)
                v11 = _pix(x, ci, y0 + 1, x0 + 1, h, w)
                dfx += g * ((1 - ay) * (v01 - v00) + ay * (v11 - v10))
                dfy += g * ((1 - ax) * (v10 - v00) + ax * (v11 - v01))
                if 0 <= y0 < h and 0 <= x0 < w:
                    gx_img[ci, y0, x0] += g * (1 - ay) * (1 - ax)
                if 0 <= y0 < h and 0 <= x0 + 1 < w:
                    gx_img[ci, y0, x0 + 1] += g * (1 - ay) * ax
                if 0 <= y0 + 1 < h and 0 <= x0 < w:
                    gx_img[ci, y0 + 1, x0] += g * ay * (1 - ax)
                if 0 <= y0 + 1 < h and 0 <= x0 + 1 < w:
                    gx_img[ci, y0 + 1, x0 + 1] += g * ay * ax
            ggrid[0, i, j] = dfx * 0.5 * (w - 1)
            ggrid[1, i, j] = dfy * 0.5 * (h - 1)
    return gx_img, ggrid
