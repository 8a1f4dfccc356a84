"""Pseudo-labels from repeated stochastic teacher passes and their confidence map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..numerics import Tensor, no_grad
from .geometry import geometric_ensemble


def confidence_map(variance, alpha: float = 0.0004, beta: float = 1.5) -> np.ndarray:
    """``beta - sigmoid(variance / alpha)``; lies in ``(beta - 1, beta - 0.5]`` for variance >= 0."""
    z = np.asarray(variance) / alpha
    return beta - 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class UncertaintyEstimate:
    y_mean: np.ndarray  # [B, H, W, 3]
    variance: np.ndarray  # [B, H, W, 1], averaged over RGB
    cof: np.ndarray  # [B, H, W, 1]

    @classmethod
    def from_passes(cls, passes, alpha: float = 0.0004, beta: float = 1.5) -> UncertaintyEstimate:
        """Mean, population variance and confidence of ``N`` pseudo-labels.

        The variance uses the pairwise form ``sum_{i<j} (y_i - y_j)^2 / N^2``,
        which is exactly zero when all passes agree.
        """
        passes = list(passes)
        n = len(passes)
        y_mean = np.stack(passes).mean(axis=0)
        acc = np.zeros_like(y_mean)
        for i in range(n):
            for j in range(i + 1, n):
                acc += (passes[i] - passes[j]) ** 2
        variance = (acc / n**2).mean(axis=-1, keepdims=True)
        return cls(y_mean, variance, confidence_map(variance, alpha, beta).astype(y_mean.dtype))


def estimate_uncertainty(teacher, x_lr, n_passes: int = 5, tau: float = 0.1,
                         rng: np.random.Generator | None = None, alpha: float = 0.0004, beta: float = 1.5,
                         ensemble: bool = True, noise: bool = True) -> UncertaintyEstimate:
    """Run the teacher ``n_passes`` times in Gumbel-softmax mode and summarize.

    With ``ensemble`` each pass is a full 8-way geometric self-ensemble, every
    forward drawing fresh Gumbel noise.  The teacher's previous mode is
    restored afterwards.
    """
    if n_passes < 2:
        raise ConfigError(f"uncertainty estimation needs at least 2 passes, got {n_passes}")
    saved = (teacher.norm_mode, teacher.tau, teacher.noise_rng, teacher.gumbel_noise, teacher.training)
    teacher.set_norm_mode("gumbel", tau, rng=rng, noise=noise)
    teacher.eval()
    x = x_lr.data if isinstance(x_lr, Tensor) else np.asarray(x_lr)
    try:
        passes = []
        with no_grad():
            for _ in range(n_passes):
                passes.append(geometric_ensemble(teacher, x) if ensemble else teacher(Tensor(x)).data)
    finally:
        mode, t, r, nz, training = saved
        teacher.set_norm_mode(mode, t, rng=r, noise=nz)
        teacher.train(training)
    return UncertaintyEstimate.from_passes(passes, alpha, beta)
