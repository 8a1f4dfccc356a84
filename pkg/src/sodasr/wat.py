"""Wavelet Augmentation Transformer.

Pipeline for a feature batch ``f_in: [B, H, W, C]``:

1. packet-decompose ``f_in`` at every level in ``levels``;
2. run batch augmentation attention (self-attention across the *batch* axis)
   on each level's low-pass band and add it back residually;
3. concatenate the low bands of all levels into one token sequence and apply a
   pre-norm multi-head deformable attention block and a pre-norm MLP block;
4. split the tokens, write them back as band 0 of each level (detail bands are
   untouched), reconstruct every level and fuse by mean (default) or sum.

All output projections start at zero, so a freshly built transformer with mean
fusion is the identity map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numerics import (
    Linear,
    Module,
    Parameter,
    Tensor,
    bilinear_sample,
    concat,
    gelu,
    layer_norm,
    matmul,
    reshape,
    softmax,
    split,
    swapaxes,
    transpose,
)
from .numerics.tensor import as_tensor
from .wavelet import SubbandSet, wpt_decompose_levels, wpt_reconstruct


@dataclass(frozen=True)
class LevelSet:
    levels: tuple[int, ...] = (1, 2, 3, 4)

    def __post_init__(self):
        lv = tuple(self.levels)
        if not lv or lv[0] < 1 or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError(f"wavelet levels must be strictly increasing positive integers, got {lv}")
        object.__setattr__(self, "levels", lv)

    def validate(self, h: int, w: int) -> None:
        top = self.levels[-1]
        if 2**top > min(h, w):
            raise ShapeError(f"level {top} exceeds log2(min(H, W)) for a {h}x{w} map")
        for size, name in ((h, "H"), (w, "W")):
            if size % 2**top:
                raise ShapeError(f"axis {name} (size {size}) is not divisible by 2**{top}")

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


def cell_centres(h: int, w: int) -> np.ndarray:
    """``[h*w, 2]`` normalized ``(x, y)`` centres of a row-major ``h x w`` grid."""
    ys, xs = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=-1)


def compute_reference_points(levels, h: int, w: int) -> np.ndarray:
    """Cell-centre coordinates ``(x, y)`` of every low-band token, concatenated in level order."""
    levels = levels if isinstance(levels, LevelSet) else LevelSet(tuple(levels))
    levels.validate(h, w)
    return np.concatenate([cell_centres(h >> lvl, w >> lvl) for lvl in levels], axis=0)


class BatchAugmentationAttention(Module):
    """Single-head self-attention whose sequence axis is the batch."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype=np.float32):
        self.q = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.k = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.v = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.o = Linear(channels, channels, rng, bias=False, zero_init=True, dtype=dtype)

    def __call__(self, s0) -> Tensor:
        s0 = as_tensor(s0)
        if s0.ndim != 3:
            raise ShapeError(f"BAA expects [B, n, C], got {s0.shape}")
        c = s0.shape[-1]
        x = transpose(s0, (1, 0, 2))  # [n, B, C]
        q, k, v = self.q(x), self.k(x), self.v(x)
        att = softmax(matmul(q, swapaxes(k, 1, 2)) * (1.0 / np.sqrt(c)), axis=-1)  # [n, B, B]
        return transpose(self.o(matmul(att, v)), (1, 0, 2))


def baa_forward(s0, level_params: BatchAugmentationAttention) -> Tensor:
    return level_params(s0)


class DeformableAttention(Module):
    """Multi-head deformable attention over several feature levels.

    For query ``i`` with reference point ``p_i`` each head samples ``points``
    locations per level at ``p_i + offset`` (offsets are predicted in units of
    that level's texels), weights them with a softmax over all
    ``levels * points`` slots of the head and projects the result back.
    ``value_proj`` stacks the per-head down projections, ``output_proj`` the
    per-head up projections.
    """

    def __init__(self, channels: int, rng: np.random.Generator, heads: int = 4, n_levels: int = 4,
                 points: int = 4, dtype=np.float32):
        if channels % heads:
            raise ValueError(f"channels ({channels}) must be divisible by heads ({heads})")
        self.heads, self.n_levels, self.points = heads, n_levels, points
        self.value_proj = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.output_proj = Linear(channels, channels, rng, bias=False, zero_init=True, dtype=dtype)
        self.offset_head = Linear(channels, heads * n_levels * points * 2, rng, zero_init=True, dtype=dtype)
        self.weight_head = Linear(channels, heads * n_levels * points, rng, zero_init=True, dtype=dtype)

    def attention_weights(self, x) -> Tensor:
        b, n, _ = x.shape
        logits = reshape(self.weight_head(x), (b, n, self.heads, self.n_levels * self.points))
        return reshape(softmax(logits, axis=-1), (b, n, self.heads, self.n_levels, self.points))

    def __call__(self, x, level_maps) -> Tensor:
        """``x: [B, N, C]`` queries; ``level_maps``: one ``[B, h, w, C]`` map per level, in token order."""
        x = as_tensor(x)
        b, n, c = x.shape
        nh, nl, nk = self.heads, self.n_levels, self.points
        ch = c // nh
        if len(level_maps) != nl:
            raise ShapeError(f"expected {nl} level maps, got {len(level_maps)}")
        level_shapes = [(m.shape[1], m.shape[2]) for m in level_maps]
        if sum(h * w for h, w in level_shapes) != n:
            raise ShapeError(f"token count {n} does not match level shapes {level_shapes}")

        texel = np.array([[w, h] for h, w in level_shapes], dtype=x.dtype).reshape(1, 1, 1, nl, 1, 2)
        offsets = reshape(self.offset_head(x), (b, n, nh, nl, nk, 2)) * (1.0 / texel)
        ref = np.concatenate([cell_centres(h, w) for h, w in level_shapes]).astype(x.dtype)
        locs = offsets + ref.reshape(1, n, 1, 1, 1, 2)
        attn = self.attention_weights(x)

        total = None
        for lvl, ((h, w), fmap) in enumerate(zip(level_shapes, level_maps)):
            value = self.value_proj(as_tensor(fmap))
            vmap = reshape(transpose(reshape(value, (b, h, w, nh, ch)), (0, 3, 1, 2, 4)), (b * nh, h, w, ch))
            loc = transpose(locs[:, :, :, lvl], (0, 2, 1, 3, 4))  # [B, H, N, K, 2]
            sampled = bilinear_sample(vmap, reshape(loc, (b * nh, n * nk, 2)))
            sampled = reshape(sampled, (b, nh, n, nk, ch))
            a = reshape(transpose(attn[:, :, :, lvl], (0, 2, 1, 3)), (b, nh, n, nk, 1))
            part = (sampled * a).sum(axis=3)  # [B, H, N, ch]
            total = part if total is None else total + part
        heads_out = reshape(transpose(total, (0, 2, 1, 3)), (b, n, c))
        return self.output_proj(heads_out)


def mhda_forward(x, level_maps, params: DeformableAttention) -> Tensor:
    return params(x, level_maps)


class WaveletAugmentationTransformer(Module):
    def __init__(self, channels: int, rng: np.random.Generator, levels=(1, 2, 3, 4), heads: int = 4,
                 points: int = 4, fusion: str = "mean", mlp_ratio: int = 2, dtype=np.float32):
        if fusion not in ("mean", "sum"):
            raise ValueError(f"fusion must be 'mean' or 'sum', got {fusion!r}")
        self._levels = LevelSet(tuple(levels))
        self.fusion = fusion
        self.baa = [BatchAugmentationAttention(channels, rng, dtype) for _ in self._levels]
        self.norm1_gain = Parameter(np.ones(channels, dtype))
        self.norm1_bias = Parameter(np.zeros(channels, dtype))
        self.mhda = DeformableAttention(channels, rng, heads, len(self._levels), points, dtype)
        self.norm2_gain = Parameter(np.ones(channels, dtype))
        self.norm2_bias = Parameter(np.zeros(channels, dtype))
        self.mlp_in = Linear(channels, mlp_ratio * channels, rng, dtype=dtype)
        self.mlp_out = Linear(mlp_ratio * channels, channels, rng, zero_init=True, dtype=dtype)

    @property
    def levels(self) -> LevelSet:
        return self._levels

    def augment_bands(self, f_in) -> dict[int, SubbandSet]:
        """Packet decompositions of ``f_in`` with augmented low bands, keyed by level."""
        f_in = as_tensor(f_in)
        if f_in.ndim != 4:
            raise ShapeError(f"WAT expects [B, H, W, C], got {f_in.shape}")
        b, h, w, c = f_in.shape
        self._levels.validate(h, w)
        decomp = wpt_decompose_levels(f_in, self._levels.levels)

        shapes, tokens = [], []
        for baa, lvl in zip(self.baa, self._levels):
            s0 = decomp[lvl].low()
            hl, wl = s0.shape[1], s0.shape[2]
            shapes.append((hl, wl))
            flat = reshape(s0, (b, hl * wl, c))
            tokens.append(flat + baa(flat))
        x = concat(tokens, axis=1)

        normed = layer_norm(x, self.norm1_gain, self.norm1_bias)
        sizes = [hl * wl for hl, wl in shapes]
        maps = [reshape(t, (b, hl, wl, c)) for t, (hl, wl) in zip(split(normed, sizes, axis=1), shapes)]
        x = self.mhda(normed, maps) + x
        x = self.mlp_out(gelu(self.mlp_in(layer_norm(x, self.norm2_gain, self.norm2_bias)))) + x

        out = {}
        pieces = split(x, [hl * wl for hl, wl in shapes], axis=1)
        for lvl, piece, (hl, wl) in zip(self._levels, pieces, shapes):
            out[lvl] = decomp[lvl].with_low(reshape(piece, (b, hl, wl, c)))
        return out

    def __call__(self, f_in) -> Tensor:
        recon = [wpt_reconstruct(s) for s in self.augment_bands(f_in).values()]
        fused = recon[0]
        for r in recon[1:]:
            fused = fused + r
        if self.fusion == "mean":
            fused = fused * (1.0 / len(recon))
        return fused


def wat_forward(f_in, params: WaveletAugmentationTransformer) -> Tensor:
    return params(f_in)
