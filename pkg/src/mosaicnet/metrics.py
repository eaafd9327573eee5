"""Image quality metrics on (n, c, h, w) float arrays in linear space.

All statistics are computed in float64 regardless of input dtype. No pixels
are cropped; callers who want border-free numbers crop before calling.

PSNR is capped at 120 dB, the value of a mean squared error of 1e-12 at
peak 1. The same constant floors the differentiable loss, so
psnr_loss(x, x) == -PSNR_CAP at peak 1 and the two conventions agree.
"""

from __future__ import annotations

import math

import numpy as np

from .ops import ShapeError

PSNR_CAP = 120.0
MSE_FLOOR = 1e-12
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 4:
        raise ShapeError(f"expected (n, c, h, w), got {a.shape}")


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10 * log10(peak^2 / mse), clamped at the 120 dB cap."""
    _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP)


def psnr_loss(pred: np.ndarray, target: np.ndarray, peak: float = 1.0):
    """Negative PSNR as a differentiable training loss.

    Returns (value, grad) with grad in pred's dtype. The mse is floored at
    1e-12 so the value is finite at pred == target; below the floor the
    gradient is zero (the loss is flat there).
    """
    _check_pair(pred, target)
    diff = pred.astype(np.float64) - target.astype(np.float64)
    mse = float(np.mean(diff * diff))
    floored = max(mse, MSE_FLOOR)
    value = 10.0 * math.log10(floored) - 20.0 * math.log10(peak)
    if mse > MSE_FLOOR:
        scale = 10.0 / (math.log(10.0) * mse) * (2.0 / diff.size)
        grad = (scale * diff).astype(pred.dtype)
    else:
        grad = np.zeros_like(pred)
    return value, grad


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient w.r.t. pred."""
    _check_pair(pred, target)
    diff = pred.astype(np.float64) - target.astype(np.float64)
    value = float(np.mean(diff * diff))
    grad = ((2.0 / diff.size) * diff).astype(pred.dtype)
    return value, grad


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    xs = np.arange(size, dtype=np.float64) - half
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    k /= k.sum()
    return np.outer(k, k)


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean structural similarity over valid 11x11 Gaussian windows.

    Per channel, then averaged over channels and batch. Spatial extents must
    be at least the window size. C1 = (0.01*peak)^2, C2 = (0.03*peak)^2.
    """
    _check_pair(a, b)
    n, c, h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(f"spatial {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    kern = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)

    def wmean(img):
        win = np.lib.stride_tricks.sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW), axis=(2, 3))
        return np.tensordot(win, kern, axes=([4, 5], [0, 1]))

    mu_x = wmean(x)
    mu_y = wmean(y)
    xx = wmean(x * x) - mu_x * mu_x
    yy = wmean(y * y) - mu_y * mu_y
    xy = wmean(x * y) - mu_x * mu_y
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    )
    return float(ssim_map.mean())
