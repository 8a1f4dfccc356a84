"""Supervised source pre-training and model evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..numerics import Adam, Tensor, no_grad
from .metrics import psnr_y, ssim
from .patches import extract_patches


@dataclass
class SourceTrainResult:
    losses: list[float] = field(default_factory=list)


def learning_rate(base: float, it: int, iterations: int, schedule: str = "cosine") -> float:
    """Step size at iteration ``it``: constant, or cosine-annealed from ``base`` towards zero."""
    if schedule == "constant":
        return base
    if schedule == "cosine":
        return 0.5 * base * (1.0 + np.cos(np.pi * it / max(iterations, 1)))
    raise ValueError(f"unknown schedule {schedule!r}; expected 'constant' or 'cosine'")


def train_source(net, pairs, iterations: int, lr: float = 1e-3, batch: int = 8, patch: int = 48,
                 rng: np.random.Generator | None = None,
                 callback: Callable[[int, float], None] | None = None,
                 schedule: str = "cosine") -> SourceTrainResult:
    """L1 training of ``net`` on ``(lr, hr)`` pairs; updates ``net`` in place."""
    learning_rate(lr, 0, iterations, schedule)
    rng = rng if rng is not None else np.random.default_rng(0)
    net.set_norm_mode("softmax")
    net.train()
    opt = Adam(net.named_parameters(), lr=lr)
    result = SourceTrainResult()
    dtype = net.head.weight.dtype
    for it in range(iterations):
        pb = extract_patches(pairs, patch, net.scale, rng, batch)
        opt.state.learning_rate = learning_rate(lr, it, iterations, schedule)
        opt.zero_grad()
        loss = (net(Tensor(pb.lr.astype(dtype))) - pb.hr.astype(dtype)).abs().mean()
        loss.backward()
        opt.step()
        result.losses.append(float(loss.item()))
        if callback is not None:
            callback(it, result.losses[-1])
    return result


def super_resolve(net, lr_images, chunk: int = 4) -> list[np.ndarray]:
    """Evaluation-mode SR of full images (grouped by shape to batch them)."""
    was_training = net.training
    net.eval()
    dtype = net.head.weight.dtype
    out: list[np.ndarray | None] = [None] * len(lr_images)
    try:
        with no_grad():
            for start in range(0, len(lr_images), chunk):
                idx = list(range(start, min(start + chunk, len(lr_images))))
                shapes = {lr_images[k].shape for k in idx}
                groups = [idx] if len(shapes) == 1 else [[k] for k in idx]
                for g in groups:
                    x = np.stack([lr_images[k] for k in g]).astype(dtype)
                    y = net(Tensor(x)).data
                    for n, k in enumerate(g):
                        out[k] = y[n].astype(np.float32)
    finally:
        net.train(was_training)
    return out


def evaluate_model(net, pairs, shave: int | None = None) -> tuple[float, float]:
    """Mean PSNR-Y and SSIM of ``net`` over ``(lr, hr)`` pairs."""
    shave = net.scale if shave is None else shave
    srs = super_resolve(net, [lr for lr, _ in pairs])
    p = [psnr_y(sr, hr, shave) for sr, (_, hr) in zip(srs, pairs)]
    s = [ssim(sr, hr, shave) for sr, (_, hr) in zip(srs, pairs)]
    return float(np.mean(p)), float(np.mean(s))
