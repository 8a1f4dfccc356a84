"""Procedural HR images with both smooth regions and fine detail."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter


def _one_image(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    # smooth colour gradient
    c0, cx, cy = rng.uniform(0.2, 0.8, 3), rng.uniform(-0.4, 0.4, 3), rng.uniform(-0.4, 0.4, 3)
    img = c0 + cx * xx[..., None] + cy * yy[..., None]

    # a couple of low-frequency sinusoids
    for _ in range(2):
        freq = rng.uniform(1.0, 4.0)
        theta = rng.uniform(0, np.pi)
        phase = (np.cos(theta) * xx + np.sin(theta) * yy) * 2 * np.pi * freq + rng.uniform(0, 2 * np.pi)
        img = img + rng.uniform(0.03, 0.1) * np.sin(phase)[..., None] * rng.uniform(0.5, 1.0, 3)

    # hard-edged shapes: axis-aligned rectangles, discs and oriented half-planes
    for _ in range(rng.integers(4, 9)):
        kind = rng.integers(0, 3)
        if kind == 0:
            x0, y0 = rng.uniform(0, 0.8, 2)
            w, h = rng.uniform(0.05, 0.4, 2)
            mask = (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
        elif kind == 1:
            cx_, cy_ = rng.uniform(0.1, 0.9, 2)
            mask = (xx - cx_) ** 2 + (yy - cy_) ** 2 < rng.uniform(0.03, 0.25) ** 2
        else:
            theta = rng.uniform(0, 2 * np.pi)
            mask = np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5) > rng.uniform(0.1, 0.45)
        alpha = rng.uniform(0.5, 1.0)
        img = np.where(mask[..., None], (1 - alpha) * img + alpha * rng.uniform(0, 1, 3), img)

    # stripes give a band of high-frequency content
    if rng.random() < 0.5:
        period = rng.uniform(3.0, 8.0) / size
        theta = rng.uniform(0, np.pi)
        stripes = np.sin(2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / period) > 0
        x0, y0 = rng.uniform(0, 0.6, 2)
        region = (xx >= x0) & (xx < x0 + 0.35) & (yy >= y0) & (yy < y0 + 0.35)
        img = np.where((region & stripes)[..., None], img * 0.5, img)

    # band-limited texture
    noise = gaussian_filter(rng.standard_normal((size, size, 3)), sigma=(rng.uniform(0.7, 2.5),) * 2 + (0,))
    img = img + rng.uniform(0.02, 0.08) * noise / (noise.std() + 1e-12)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synthesize_hr(count: int, size: int, rng: np.random.Generator, scale: int = 4) -> np.ndarray:
    """``[count, size, size, 3]`` float32 images in ``[0, 1]``."""
    if size % (scale * 16):
        raise ValueError(f"HR size {size} must be divisible by {scale * 16}")
    return np.stack([_one_image(size, rng) for _ in range(count)]) if count else np.zeros((0, size, size, 3), np.float32)
