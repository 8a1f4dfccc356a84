"""Resampling and the HR -> LR degradation model.

Images are channels-last float arrays ``[..., H, W, C]`` in ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import ShapeError


def cubic_kernel(t, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _as_ratio(factor) -> Fraction:
    ratio = Fraction(factor).limit_denominator(64)
    if ratio <= 0 or abs(float(ratio) - float(factor)) > 1e-9:
        raise ValueError(f"unsupported resize factor {factor}")
    return ratio


def resize_matrix(n_in: int, ratio: Fraction, a: float = -0.5) -> np.ndarray:
    """``[n_out, n_in]`` cubic resampling weights with edge clamping.

    Pixel centres are aligned (``x_in = (i + 0.5) / ratio - 0.5``).  When
    shrinking, the kernel is stretched by ``1 / ratio`` so it also low-passes.
    """
    n_out = n_in * ratio
    if n_out.denominator != 1:
        raise ShapeError(f"size {n_in} times {ratio} is not an integer")
    n_out = int(n_out)
    stretch = max(1.0, float(1 / ratio))
    support = 2.0 * stretch
    centres = (np.arange(n_out) + 0.5) / float(ratio) - 0.5
    left = np.floor(centres - support).astype(np.int64) + 1
    taps = int(np.ceil(2 * support)) + 1
    idx = left[:, None] + np.arange(taps)[None, :]
    w = cubic_kernel((idx - centres[:, None]) / stretch, a)
    w /= w.sum(axis=1, keepdims=True)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(np.arange(n_out), taps), np.clip(idx, 0, n_in - 1).ravel()), w.ravel())
    return mat


def bicubic_resize(img: np.ndarray, factor) -> np.ndarray:
    """Separable bicubic resize of ``[..., H, W, C]`` by ``factor`` (e.g. 4 or 1/4)."""
    img = np.asarray(img)
    ratio = _as_ratio(factor)
    if ratio == 1:
        return img.copy()
    h, w = img.shape[-3], img.shape[-2]
    mh, mw = resize_matrix(h, ratio), resize_matrix(w, ratio)
    work = img.astype(np.float64)
    out = np.einsum("oh,...hwc->...owc", mh, work)
    out = np.einsum("pw,...owc->...opc", mw, out)
    return out.astype(img.dtype if np.issubdtype(img.dtype, np.floating) else np.float32)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized Gaussian taps truncated at radius ``ceil(3 sigma)``."""
    if not sigma > 0:
        raise ValueError(f"blur sigma must be positive, got {sigma}")
    r = int(np.ceil(3 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)
    out = correlate1d(np.asarray(img, dtype=np.float64), k, axis=-3, mode="nearest")
    return correlate1d(out, k, axis=-2, mode="nearest")


@dataclass(frozen=True)
class DegradationSpec:
    """Optional Gaussian blur, bicubic downscale by ``scale``, additive noise, clamp."""

    kernel: str = "bicubic"
    sigma: float = 0.0
    scale: int = 4
    noise_std: float = 0.0

    def __post_init__(self):
        if self.kernel not in ("bicubic", "gaussian"):
            raise ValueError(f"kernel must be 'bicubic' or 'gaussian', got {self.kernel!r}")
        if self.kernel == "gaussian" and not self.sigma > 0:
            raise ValueError("a gaussian degradation needs sigma > 0")
        if self.scale < 1 or self.noise_std < 0:
            raise ValueError(f"invalid scale {self.scale} or noise_std {self.noise_std}")


SOURCE_DEGRADATION = DegradationSpec("bicubic", scale=4)
TARGET_DEGRADATION = DegradationSpec("gaussian", sigma=1.8, scale=4, noise_std=0.01)


def degrade(hr: np.ndarray, spec: DegradationSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    hr = np.asarray(hr, dtype=np.float32)
    h, w = hr.shape[-3], hr.shape[-2]
    for size, name in ((h, "H"), (w, "W")):
        if size % spec.scale:
            raise ShapeError(f"axis {name} (size {size}) is not divisible by scale {spec.scale}")
    x = gaussian_blur(hr, spec.sigma) if spec.kernel == "gaussian" else hr.astype(np.float64)
    x = bicubic_resize(x, Fraction(1, spec.scale))
    if spec.noise_std > 0:
        if rng is None:
            raise ValueError("a noisy degradation needs an rng")
        x = x + rng.normal(0.0, spec.noise_std, size=x.shape)
    return np.clip(x, 0.0, 1.0).astype(np.float32)
