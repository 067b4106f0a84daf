"""Image quality metrics: PSNR and windowed SSIM."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """10 log10(max_val^2 / MSE) over all channels jointly, capped at 99 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if not max_val > 0:
        raise ValueError(f"max_val must be positive, got {max_val}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(max_val**2 / mse))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _windowed_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local means, valid region only."""
    pad = len(kernel) // 2
    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    return out[pad:-pad, pad:-pad]


def ssim(a: np.ndarray, b: np.ndarray, value_range: float = 1.0) -> float:
    """Mean structural similarity over 11x11 Gaussian windows (sigma 1.5).

    Color images are scored per channel and averaged. Windows are fully
    interior (no padding), so inputs must be at least 11x11.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[:2]}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]

    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (0.01 * value_range) ** 2
    c2 = (0.03 * value_range) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mu_x = _windowed_mean(x, kernel)
        mu_y = _windowed_mean(y, kernel)
        var_x = _windowed_mean(x * x, kernel) - mu_x**2
        var_y = _windowed_mean(y * y, kernel) - mu_y**2
        cov = _windowed_mean(x * y, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))
