"""Orthonormal Haar wavelet packet transform on channels-last feature maps.

One analysis step maps each 2x2 block ``[[a, b], [c, d]]`` to::

    LL = (a + b + c + d) / 2      LH = (a + b - c - d) / 2
    HL = (a - b + c - d) / 2      HH = (a - b - c + d) / 2

The 4x4 matrix is symmetric and orthogonal, so synthesis uses the same
coefficients and the backward pass of each step is the opposite step.

A level-``l`` packet decomposition stores ``4**l`` bands stacked on axis 1 of
a ``[B, 4**l, H / 2**l, W / 2**l, C]`` tensor.  Band index is the filter path
read as a base-4 number, first level most significant, digits
``0=LL, 1=LH, 2=HL, 3=HH``; band 0 is the pure low-pass path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numerics import Tensor, concat, getitem, reshape, transpose
from .numerics.tensor import as_tensor, make_result


def _ll(a, b, c, d):
    return ((a + b) + (c + d)) * 0.5


def _analysis(x: np.ndarray) -> np.ndarray:
    """``[..., H, W, C] -> [..., 4, H/2, W/2, C]``."""
    a = x[..., 0::2, 0::2, :]
    b = x[..., 0::2, 1::2, :]
    c = x[..., 1::2, 0::2, :]
    d = x[..., 1::2, 1::2, :]
    return np.stack(
        [_ll(a, b, c, d), ((a + b) - (c + d)) * 0.5, ((a - b) + (c - d)) * 0.5, ((a - b) - (c - d)) * 0.5],
        axis=-4,
    )


def _synthesis(bands: np.ndarray) -> np.ndarray:
    """``[..., 4, h, w, C] -> [..., 2h, 2w, C]``; exact inverse of :func:`_analysis`."""
    ll, lh, hl, hh = (bands[..., k, :, :, :] for k in range(4))
    *lead, h, w, c = ll.shape
    out = np.empty((*lead, 2 * h, 2 * w, c), dtype=bands.dtype)
    out[..., 0::2, 0::2, :] = ((ll + lh) + (hl + hh)) * 0.5
    out[..., 0::2, 1::2, :] = ((ll + lh) - (hl + hh)) * 0.5
    out[..., 1::2, 0::2, :] = ((ll - lh) + (hl - hh)) * 0.5
    out[..., 1::2, 1::2, :] = ((ll - lh) - (hl - hh)) * 0.5
    return out


def haar_step(x) -> Tensor:
    """One full 2-D Haar analysis step, ``[..., H, W, C] -> [..., 4, H/2, W/2, C]``."""
    x = as_tensor(x)
    return make_result(_analysis(x.data), (x,), lambda g: (_synthesis(g),))


def haar_inverse_step(bands) -> Tensor:
    """Inverse of :func:`haar_step`."""
    bands = as_tensor(bands)
    return make_result(_synthesis(bands.data), (bands,), lambda g: (_analysis(g),))


def _lowpass(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        half = g * 0.5
        full = np.empty(x.shape, dtype=g.dtype)
        for i in (0, 1):
            for j in (0, 1):
                full[..., i::2, j::2, :] = half
        return (full,)

    xd = x.data
    out = _ll(xd[..., 0::2, 0::2, :], xd[..., 0::2, 1::2, :], xd[..., 1::2, 0::2, :], xd[..., 1::2, 1::2, :])
    return make_result(out, (x,), backward)


def _check_divisible(shape, level: int) -> None:
    if level < 1:
        raise ShapeError(f"wavelet level must be >= 1, got {level}")
    if len(shape) != 4:
        raise ShapeError(f"expected a [B, H, W, C] tensor, got shape {shape}")
    step = 2**level
    for axis, name in ((1, "H"), (2, "W")):
        if shape[axis] % step:
            raise ShapeError(f"axis {name} (size {shape[axis]}) is not divisible by 2**{level} = {step}")


@dataclass
class SubbandSet:
    """Wavelet packet bands of one decomposition level, stacked as ``[B, 4**level, h, w, C]``."""

    level: int
    coeffs: Tensor

    def __post_init__(self):
        shape = self.coeffs.shape
        if len(shape) != 5 or shape[1] != 4**self.level:
            raise ShapeError(f"level {self.level} needs coeffs of shape [B, {4 ** self.level}, h, w, C], got {shape}")

    @property
    def bands(self) -> list[Tensor]:
        return [getitem(self.coeffs, (slice(None), k)) for k in range(4**self.level)]

    @property
    def band_shape(self) -> tuple[int, ...]:
        s = self.coeffs.shape
        return (s[0], s[2], s[3], s[4])

    @classmethod
    def from_bands(cls, level: int, bands) -> SubbandSet:
        bands = [as_tensor(b) for b in bands]
        if len(bands) != 4**level:
            raise ShapeError(f"level {level} needs {4 ** level} bands, got {len(bands)}")
        first = bands[0].shape
        for k, b in enumerate(bands):
            if b.shape != first:
                raise ShapeError(f"band {k} has shape {b.shape}, band 0 has {first}")
        stacked = concat([reshape(b, (first[0], 1) + tuple(first[1:])) for b in bands], axis=1)
        return cls(level, stacked)

    def low(self) -> Tensor:
        """The pure low-pass band ``s_0``, shape ``[B, h, w, C]``."""
        return getitem(self.coeffs, (slice(None), 0))

    def with_low(self, band0) -> SubbandSet:
        """Copy with band 0 replaced; all other bands are passed through unchanged."""
        band0 = as_tensor(band0)
        if band0.shape != self.band_shape:
            raise ShapeError(f"replacement band has shape {band0.shape}, expected {self.band_shape}")
        b, h, w, c = band0.shape
        rest = getitem(self.coeffs, (slice(None), slice(1, None)))
        return SubbandSet(self.level, concat([reshape(band0, (b, 1, h, w, c)), rest], axis=1))


def _refine(coeffs: Tensor) -> Tensor:
    """Split every band of a ``[B, m, h, w, C]`` stack once more into ``[B, 4m, h/2, w/2, C]``."""
    b, m, h, w, c = coeffs.shape
    return reshape(haar_step(coeffs), (b, 4 * m, h // 2, w // 2, c))


def wpt_decompose(f, level: int) -> SubbandSet:
    f = as_tensor(f)
    _check_divisible(f.shape, level)
    b, h, w, c = f.shape
    coeffs = reshape(f, (b, 1, h, w, c))
    for _ in range(level):
        coeffs = _refine(coeffs)
    return SubbandSet(level, coeffs)


def wpt_decompose_levels(f, levels) -> dict[int, SubbandSet]:
    """Decompositions at several levels, sharing the intermediate refinements."""
    f = as_tensor(f)
    levels = sorted(levels)
    _check_divisible(f.shape, levels[-1])
    b, h, w, c = f.shape
    coeffs = reshape(f, (b, 1, h, w, c))
    out: dict[int, SubbandSet] = {}
    for lvl in range(1, levels[-1] + 1):
        coeffs = _refine(coeffs)
        if lvl in levels:
            out[lvl] = SubbandSet(lvl, coeffs)
    return out


def wpt_reconstruct(s: SubbandSet) -> Tensor:
    coeffs = s.coeffs
    b, m, h, w, c = coeffs.shape
    while m > 1:
        grouped = reshape(coeffs, (b, m // 4, 4, h, w, c))
        coeffs = haar_inverse_step(grouped)
        m, h, w = m // 4, 2 * h, 2 * w
    return reshape(coeffs, (b, h, w, c))


def low_band(x, level: int) -> Tensor:
    """Band 0 of a level-``level`` decomposition without computing the other bands."""
    x = as_tensor(x)
    _check_divisible(x.shape, level)
    for _ in range(level):
        x = _lowpass(x)
    return x


def high_bands(x, level: int) -> Tensor:
    """Detail children of the ``(level-1)``-fold low-pass path, channel-concatenated.

    Returns ``[B, H/2**level, W/2**level, 3C]`` ordered ``LH, HL, HH``.
    """
    x = as_tensor(x)
    _check_divisible(x.shape, level)
    for _ in range(level - 1):
        x = _lowpass(x)
    bands = haar_step(x)  # [B, 4, h, w, C]
    b, _, h, w, c = bands.shape
    detail = getitem(bands, (slice(None), slice(1, 4)))
    return reshape(transpose(detail, (0, 2, 3, 1, 4)), (b, h, w, 3 * c))
