"""Evaluation metrics: mask IoU and windowed structural similarity."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ArgumentError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def iou(a: np.ndarray, b: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of thresholded masks; 1.0 when both empty."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"iou shapes differ: {a.shape} vs {b.shape}")
    am = a > threshold
    bm = b > threshold
    union = np.logical_or(am, bm).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(am, bm).sum() / union)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def _windowed_mean(plane: np.ndarray, win: np.ndarray) -> np.ndarray:
    view = sliding_window_view(plane, win.shape)
    return np.tensordot(view, win, axes=([2, 3], [0, 1]))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over an 11x11 Gaussian window, sigma 1.5.

    Inputs are (C,H,W) on unit dynamic range; channels are averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ArgumentError(f"ssim needs (C,H,W) with H,W >= {SSIM_WINDOW}, got {a.shape}")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    vals = []
    for c in range(a.shape[0]):
        x, y = a[c], b[c]
        mx = _windowed_mean(x, win)
        my = _windowed_mean(y, win)
        mxx = _windowed_mean(x * x, win)
        myy = _windowed_mean(y * y, win)
        mxy = _windowed_mean(x * y, win)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        num = (2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
        vals.append((num / den).mean())
    return float(np.mean(vals))
