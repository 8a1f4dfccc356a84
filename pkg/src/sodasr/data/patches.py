"""Random aligned crops for training batches."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class PatchBatch:
    lr: np.ndarray  # [B, p, p, 3]
    hr: np.ndarray | None  # [B, s*p, s*p, 3], None for unlabeled images
    offsets: np.ndarray  # [B, 3] rows of (image index, i, j) in LR pixels


def extract_patches(items, patch: int, scale: int, rng: np.random.Generator, batch: int) -> PatchBatch:
    """Sample ``batch`` random crops.

    ``items`` holds either LR images or ``(lr, hr)`` pairs.  The LR crop at
    ``(i, j)`` pairs with the HR crop at ``(scale*i, scale*j)``.  Images smaller
    than the patch are skipped with a warning.
    """
    paired = len(items) > 0 and isinstance(items[0], tuple)
    usable = []
    for k, item in enumerate(items):
        lr = item[0] if paired else item
        if lr.shape[0] < patch or lr.shape[1] < patch:
            warnings.warn(f"skipping image {k}: {lr.shape[:2]} is smaller than patch {patch}", stacklevel=2)
            continue
        usable.append(k)
    if not usable:
        raise ValueError(f"no image is at least {patch}x{patch}")

    lr_out = np.empty((batch, patch, patch, 3), np.float32)
    hr_out = np.empty((batch, patch * scale, patch * scale, 3), np.float32) if paired else None
    offsets = np.empty((batch, 3), np.int64)
    picks = rng.choice(usable, size=batch)
    for n, k in enumerate(picks):
        lr = items[k][0] if paired else items[k]
        i = rng.integers(0, lr.shape[0] - patch + 1)
        j = rng.integers(0, lr.shape[1] - patch + 1)
        lr_out[n] = lr[i : i + patch, j : j + patch]
        if paired:
            hr = items[k][1]
            hr_out[n] = hr[scale * i : scale * (i + patch), scale * j : scale * (j + patch)]
        offsets[n] = (k, i, j)
    return PatchBatch(lr_out, hr_out, offsets)
