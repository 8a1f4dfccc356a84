"""Fidelity metrics: PSNR on BT.601 luma and Gaussian-window SSIM on RGB."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import ShapeError

PSNR_CAP = 99.0
LUMA = np.array([0.299, 0.587, 0.114])


def _prepare(sr, hr, shave: int):
    sr, hr = np.asarray(sr, dtype=np.float64), np.asarray(hr, dtype=np.float64)
    if sr.shape != hr.shape:
        raise ShapeError(f"metric inputs differ in shape: {sr.shape} vs {hr.shape}")
    if shave:
        sr = sr[..., shave:-shave, shave:-shave, :]
        hr = hr[..., shave:-shave, shave:-shave, :]
    return sr, hr


def psnr_y(sr, hr, shave: int = 4) -> float:
    """PSNR in dB of the luma channel after shaving ``shave`` border pixels; batches are averaged."""
    sr, hr = _prepare(sr, hr, shave)
    if sr.ndim == 4:
        return float(np.mean([psnr_y(a, b, 0) for a, b in zip(sr, hr)]))
    mse = float(np.mean((sr @ LUMA - hr @ LUMA) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def ssim(sr, hr, shave: int = 4, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over RGB channels with an 11x11 Gaussian window (sigma 1.5), data range 1.

    Local statistics are filtered over the whole image with reflected borders
    and averaged over the region at least half a window from the edge.
    """
    sr, hr = _prepare(sr, hr, shave)
    if sr.ndim == 4:
        return float(np.mean([ssim(a, b, 0, k1, k2) for a, b in zip(sr, hr)]))
    win = _gaussian_window()
    pad = len(win) // 2
    if min(sr.shape[0], sr.shape[1]) < len(win):
        raise ShapeError(f"SSIM needs at least {len(win)}x{len(win)} pixels, got {sr.shape[:2]}")

    def filt(a):
        return correlate1d(correlate1d(a, win, axis=0, mode="reflect"), win, axis=1, mode="reflect")

    c1, c2 = k1**2, k2**2
    mx, my = filt(sr), filt(hr)
    vx = filt(sr * sr) - mx * mx
    vy = filt(hr * hr) - my * my
    cov = filt(sr * hr) - mx * my
    s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(s[pad:-pad, pad:-pad].mean())
