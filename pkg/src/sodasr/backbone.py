"""Toy super-resolution generator and the high-band discriminator.

``ToySRNet`` is split into a feature extractor (head conv plus residual
blocks with channel attention) and a reconstructor (nearest upsampling, conv,
tail conv, plus a bicubic upsampling of the LR input as a global skip) so that
the wavelet augmentation transformer can be slotted in between.  The channel attention normalizes its per-channel scores either with
a plain softmax or with a Gumbel-softmax, which is what makes repeated teacher
passes stochastic.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .data.degrade import resize_matrix
from .errors import ShapeError
from .numerics import (
    Conv2d,
    Linear,
    Module,
    Tensor,
    clamp,
    gumbel_softmax_logits,
    leaky_relu,
    mean,
    relu,
    reshape,
    separable_resize,
    sigmoid,
    softmax,
    upsample_conv2d,
)
from .numerics.tensor import as_tensor

NORM_MODES = ("softmax", "gumbel")


def channel_attention(features, score_layer: Linear, norm_mode: str = "softmax", tau: float = 1.0,
                      rng: np.random.Generator | None = None, noise=None) -> Tensor:
    """Reweight the channels of ``features: [B, H, W, C]``.

    Scores are ``v = exp(z)`` with ``z = score_layer(mean-pooled features)``,
    so ``log v = z`` and Gumbel-softmax reduces to ``softmax((z + g) / tau)``.
    Channel ``i`` is scaled by ``1 + w_i - 1/C``: uniform attention leaves the
    features unchanged, and a near one-hot Gumbel draw at low temperature can
    at most double one channel instead of silencing all the others.
    """
    features = as_tensor(features)
    b, _, _, c = features.shape
    z = score_layer(mean(features, axis=(1, 2)))
    if norm_mode == "softmax":
        weights = softmax(z, axis=-1)
    elif norm_mode == "gumbel":
        weights = gumbel_softmax_logits(z, tau, rng=rng, noise=noise)
    else:
        raise ValueError(f"unknown norm_mode {norm_mode!r}; expected one of {NORM_MODES}")
    return features * reshape(weights + (1.0 - 1.0 / c), (b, 1, 1, c))


class ResBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator, dtype=np.float32):
        self.conv1 = Conv2d(channels, channels, rng, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, rng, dtype=dtype)
        self.conv2.weight.data *= 0.1  # start each block close to the identity
        self.score = Linear(channels, channels, rng, dtype=dtype)

    def __call__(self, x, norm_mode="softmax", tau=1.0, rng=None, noise=None) -> Tensor:
        y = self.conv2(relu(self.conv1(x)))
        return x + channel_attention(y, self.score, norm_mode, tau, rng, noise)


class ToySRNet(Module):
    """Small residual SR network, channels-last images in ``[0, 1]``.

    ``norm_mode`` selects the attention normalization; in ``"gumbel"`` mode
    the noise comes from ``noise_rng`` (a fresh unseeded generator when None)
    and can be switched off with ``gumbel_noise=False``, which leaves the
    temperature-scaled softmax.
    """

    def __init__(self, rng: np.random.Generator, channels: int = 32, blocks: int = 4, scale: int = 4,
                 norm_mode: str = "softmax", tau: float = 0.1, dtype=np.float32):
        if scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {scale}")
        self.scale = scale
        self.channels = channels
        self.head = Conv2d(3, channels, rng, dtype=dtype)
        self.body = [ResBlock(channels, rng, dtype) for _ in range(blocks)]
        self.up = Conv2d(channels, channels, rng, dtype=dtype)
        self.tail = Conv2d(channels, 3, rng, dtype=dtype)
        self.tail.weight.data *= 0.01  # starts close to plain bicubic upsampling
        self.training = True
        self.norm_mode = "softmax"
        self.tau = 1.0
        self.noise_rng: np.random.Generator | None = None
        self.gumbel_noise = True
        self.set_norm_mode(norm_mode, tau)

    def set_norm_mode(self, mode: str, tau: float | None = None, rng: np.random.Generator | None = None,
                      noise: bool = True) -> ToySRNet:
        if mode not in NORM_MODES:
            raise ValueError(f"unknown norm_mode {mode!r}; expected one of {NORM_MODES}")
        tau = self.tau if tau is None else tau
        if mode == "gumbel" and not tau > 0:
            raise ValueError(f"Gumbel temperature must be positive, got {tau}")
        self.norm_mode, self.tau, self.noise_rng, self.gumbel_noise = mode, float(tau), rng, noise
        return self

    def train(self, mode: bool = True) -> ToySRNet:
        self.training = mode
        return self

    def eval(self) -> ToySRNet:
        return self.train(False)

    def extract_features(self, x_lr) -> Tensor:
        x_lr = as_tensor(x_lr)
        if x_lr.ndim != 4 or x_lr.shape[-1] != 3:
            raise ShapeError(f"expected an RGB batch [B, h, w, 3], got {x_lr.shape}")
        noise = None if self.gumbel_noise else 0.0
        rng = self.noise_rng
        if self.norm_mode == "gumbel" and rng is None and self.gumbel_noise:
            rng = np.random.default_rng()
        h = self.head(x_lr)
        y = h
        for block in self.body:
            y = block(y, self.norm_mode, self.tau, rng, noise)
        return y + h

    def reconstruct(self, features, x_lr=None) -> Tensor:
        """Upsample ``features``; with ``x_lr`` the bicubic-upsampled input is added as a residual base.

        There is no activation between the upsampling conv and the tail: a
        ReLU there dies within a few dozen Adam steps and the branch stops
        learning.
        """
        features = as_tensor(features)
        if features.ndim != 4 or features.shape[-1] != self.channels:
            raise ShapeError(f"expected features [B, h, w, {self.channels}], got {features.shape}")
        out = self.tail(upsample_conv2d(features, self.up.weight, self.up.bias, self.scale))
        if x_lr is not None:
            x_lr = as_tensor(x_lr)
            _, h, w, _ = x_lr.shape
            ratio = Fraction(self.scale)
            out = out + separable_resize(x_lr, resize_matrix(h, ratio), resize_matrix(w, ratio))
        return out if self.training else clamp(out, 0.0, 1.0)

    def __call__(self, x_lr) -> Tensor:
        return self.reconstruct(self.extract_features(x_lr), x_lr)


def extract_features(net: ToySRNet, x_lr) -> Tensor:
    return net.extract_features(x_lr)


def reconstruct(net: ToySRNet, features, x_lr=None) -> Tensor:
    return net.reconstruct(features, x_lr)


class Discriminator(Module):
    """Strided conv stack over ``3C``-channel high-band maps, returning ``P(real)`` per sample."""

    def __init__(self, in_channels: int, rng: np.random.Generator, widths=(32, 64, 64), zero_init_head: bool = False,
                 dtype=np.float32):
        self.in_channels = in_channels
        chans = (in_channels,) + tuple(widths)
        self.convs = [Conv2d(a, b, rng, stride=2, dtype=dtype) for a, b in zip(chans, chans[1:])]
        self.head = Linear(chans[-1], 1, rng, zero_init=zero_init_head, dtype=dtype)

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[-1] != self.in_channels:
            raise ShapeError(f"discriminator expects [B, h, w, {self.in_channels}], got {x.shape}")
        for conv in self.convs:
            x = leaky_relu(conv(x), 0.2)
        logit = self.head(mean(x, axis=(1, 2)))
        return sigmoid(reshape(logit, (x.shape[0],)))


def discriminator_forward(d: Discriminator, high_band_tensor) -> Tensor:
    return d(high_band_tensor)
