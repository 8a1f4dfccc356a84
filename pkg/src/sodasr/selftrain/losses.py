"""Loss terms of the adaptation objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NonFiniteError, ShapeError
from ..numerics import Module, Tensor, log, no_grad
from ..numerics.tensor import as_tensor
from ..wavelet import high_bands, low_band
from .uncertainty import UncertaintyEstimate

LOG_EPS = 1e-8


def loss_rec(student_sr, estimate: UncertaintyEstimate) -> Tensor:
    """Confidence-weighted L1: ``mean |cof * sr - cof * y_mean|``."""
    sr = as_tensor(student_sr)
    if sr.shape != estimate.y_mean.shape:
        raise ShapeError(f"SR {sr.shape} and pseudo-label {estimate.y_mean.shape} differ")
    cof = estimate.cof.astype(sr.dtype)
    return (sr * cof - estimate.y_mean.astype(sr.dtype) * cof).abs().mean()


class FrozenExtractor(Module):
    """The head and first ``depth`` residual blocks of a copy of the source network, never trained."""

    def __init__(self, source_net, depth: int = 1):
        self._net = source_net
        self._depth = depth
        source_net.requires_grad_(False)
        source_net.set_norm_mode("softmax")

    def __call__(self, image) -> Tensor:
        net = self._net
        h = net.head(image)
        y = h
        for block in net.body[: self._depth]:
            y = block(y)
        return y


def loss_perceptual(student_sr, y_mean, frozen_extractor) -> Tensor:
    """L1 between extractor features of the SR output and of the pseudo-label."""
    sr = as_tensor(student_sr)
    with no_grad():
        target = frozen_extractor(Tensor(np.asarray(y_mean, dtype=sr.dtype))).data
    return (frozen_extractor(sr) - target).abs().mean()


def _gain(l1: int | None, l2: int) -> float:
    # each low-pass step scales smooth content by 2, so bands l2 - l1 levels deeper carry 2**(l2 - l1) more gain
    return 1.0 if l1 is None else 0.5 ** (l2 - l1)


def loss_low(x_lr, student_sr, l1: int = 1, l2: int = 3, compensate: bool = True) -> Tensor:
    """L1 between the level-``l1`` low band of the LR input and the level-``l2`` low band of the SR output.

    With ``compensate`` the SR band is divided by ``2**(l2 - l1)`` so that a
    consistent pair (SR whose block means equal the LR pixels) scores zero.
    """
    lr = Tensor(x_lr.data if isinstance(x_lr, Tensor) else np.asarray(x_lr), dtype=as_tensor(student_sr).dtype)
    a = low_band(lr, l1)
    b = low_band(student_sr, l2)
    if a.shape != b.shape:
        raise ConfigError(f"low bands differ in shape ({a.shape} vs {b.shape}); l2 - l1 must equal log2(scale)")
    if compensate:
        b = b * _gain(l1, l2)
    return (b - a.data).abs().mean()


def loss_high_G(student_sr, discriminator, l2: int = 3, l1: int | None = None) -> Tensor:
    """``-E[log D(H(sr))]``; passing ``l1`` rescales the SR bands to the LR band gain."""
    hb = high_bands(student_sr, l2)
    if l1 is not None:
        hb = hb * _gain(l1, l2)
    return -log(discriminator(hb) + LOG_EPS).mean()


def loss_high_D(x_lr, student_sr, discriminator, l1: int = 1, l2: int = 3, compensate: bool = True) -> Tensor:
    """``-E[log D(H(x_lr))] - E[log(1 - D(H(sr)))]`` with ``sr`` cut from the tape."""
    sr = as_tensor(student_sr)
    fake = Tensor(sr.data)
    real = Tensor(x_lr.data if isinstance(x_lr, Tensor) else np.asarray(x_lr), dtype=sr.dtype)
    h_real = high_bands(real, l1)
    h_fake = high_bands(fake, l2)
    if h_real.shape != h_fake.shape:
        raise ConfigError(f"high bands differ in shape ({h_real.shape} vs {h_fake.shape})")
    if compensate:
        h_fake = h_fake * _gain(l1, l2)
    p_real = discriminator(h_real)
    p_fake = discriminator(h_fake)
    return -log(p_real + LOG_EPS).mean() - log(1.0 - p_fake + LOG_EPS).mean()


@dataclass
class LossTerms:
    rec: Tensor | float
    per: Tensor | float
    low: Tensor | float
    high_g: Tensor | float

    def items(self):
        return (("l_rec", self.rec), ("l_per", self.per), ("l_low", self.low), ("l_highG", self.high_g))


def total_loss(terms: LossTerms, lambda1: float = 0.01, lambda2: float = 0.1, lambda3: float = 0.005):
    """``L_rec + lambda1 L_per + lambda2 L_low + lambda3 L_high^G``; rejects non-finite terms by name."""
    for name, value in terms.items():
        v = value.data if isinstance(value, Tensor) else np.asarray(value)
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"loss term {name} is not finite ({v!r})")
    return terms.rec + lambda1 * terms.per + lambda2 * terms.low + lambda3 * terms.high_g
