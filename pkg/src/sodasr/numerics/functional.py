"""Fused differentiable kernels: softmax, layer norm, convolution, bilinear sampling, Gumbel-softmax."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import DomainError, ShapeError
from .tensor import Tensor, as_tensor, log, make_result, matmul, reshape


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gain * x_hat + bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain, like=x), as_tensor(bias, like=x)
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm affine params must have shape ({c},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        gx = gg = gb = None
        if x.requires_grad:
            d = g * gain.data
            gx = inv * (d - d.mean(axis=-1, keepdims=True) - xhat * (d * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            gg = (g * xhat).sum(axis=red)
        if bias.requires_grad:
            gb = g.sum(axis=red)
        return gx, gg, gb

    return make_result(out, (x, gain, bias), backward)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``; ``weight`` is ``[in, out]``."""
    x = as_tensor(x)
    lead = x.shape[:-1]
    y = matmul(reshape(x, (-1, x.shape[-1])), weight)
    if bias is not None:
        y = y + bias
    return reshape(y, lead + (y.shape[-1],))


# ---------------------------------------------------------------- convolution
def _tap_slices(i, j, stride, ho, wo):
    return (slice(None), slice(i, i + stride * (ho - 1) + 1, stride), slice(j, j + stride * (wo - 1) + 1, stride))


def conv2d(x, weight, bias=None, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D cross-correlation, ``x: [B,H,W,Cin]``, ``weight: [Kh,Kw,Cin,Cout]``, zero padding.

    ``padding`` defaults to ``K // 2`` (same-size output at stride 1).
    """
    x = as_tensor(x)
    weight = as_tensor(weight, like=x)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects [B,H,W,C] input and [Kh,Kw,Cin,Cout] kernel, got {x.shape}, {weight.shape}")
    kh, kw, cin, cout = weight.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d requires odd kernel sizes, got {kh}x{kw}")
    b, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {cin}")
    pad = kh // 2 if padding is None else int(padding)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d output would be empty for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.data
    wd = weight.data
    use_cols = cin < 8
    narrow_out = stride == 1 and pad == kh // 2 and kh == kw and cout < 8 and cout < cin

    if use_cols:
        def columns():
            win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
            win = win[:, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
            return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, kh * kw * cin)

        out = (columns() @ wd.reshape(-1, cout)).reshape(b, ho, wo, cout)
    else:
        out = None
        for i in range(kh):
            for j in range(kw):
                t = xp[_tap_slices(i, j, stride, ho, wo)] @ wd[i, j]
                if out is None:
                    out = t
                else:
                    out += t
    if bias is not None:
        bias = as_tensor(bias, like=x)
        out = out + bias.data

    def backward(g):
        gx = gw = gb = None
        g2 = g.reshape(-1, cout)
        if narrow_out:
            # stride 1: both gradients are correlations with the (padded) output
            # gradient, whose columns are cheap because it has few channels
            gp = np.pad(g, ((0, 0), (kh - 1 - pad, kh - 1 - pad), (kw - 1 - pad, kw - 1 - pad), (0, 0)))
            gwin = np.lib.stride_tricks.sliding_window_view(gp, (kh, kw), axis=(1, 2))
            gcols = gwin.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, kh * kw * cout)
            if x.requires_grad:
                wflip = wd[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * cout, cin)
                gx = (gcols @ wflip).reshape(b, h, w, cin)
            if weight.requires_grad:
                gw = (x.data.reshape(-1, cin).T @ gcols).reshape(cin, kh, kw, cout)
                gw = np.ascontiguousarray(gw[:, ::-1, ::-1].transpose(1, 2, 0, 3))
        elif use_cols:
            cols = columns()
            if weight.requires_grad:
                gw = (cols.T @ g2).reshape(kh, kw, cin, cout)
            if x.requires_grad:
                gc = (g2 @ wd.reshape(-1, cout).T).reshape(b, ho, wo, kh, kw, cin)
                gxp = np.zeros(xp.shape, dtype=xp.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[_tap_slices(i, j, stride, ho, wo)] += gc[:, :, :, i, j, :]
                gx = gxp[:, pad : pad + h, pad : pad + w, :] if pad else gxp
        else:
            if weight.requires_grad:
                gw = np.empty_like(wd)
                for i in range(kh):
                    for j in range(kw):
                        xs = xp[_tap_slices(i, j, stride, ho, wo)].reshape(-1, cin)
                        gw[i, j] = xs.T @ g2
            if x.requires_grad:
                gxp = np.zeros(xp.shape, dtype=xp.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[_tap_slices(i, j, stride, ho, wo)] += g @ wd[i, j].T
                gx = gxp[:, pad : pad + h, pad : pad + w, :] if pad else gxp
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=0)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, parents, backward)


# ---------------------------------------------------------- bilinear sampling
def bilinear_sample(x, coords) -> Tensor:
    """Sample ``x: [B,h,w,C]`` at normalised ``coords: [B,Q,2]`` given as ``(x, y)`` in ``[0, 1]``.

    Texel ``(row, col)`` sits at ``((col + 0.5) / w, (row + 0.5) / h)``.  Positions
    outside the texel-centre hull are clamped to the border.  Differentiable with
    respect to both the feature map and the coordinates.
    """
    x, coords = as_tensor(x), as_tensor(coords)
    if x.ndim != 4 or coords.ndim != 3 or coords.shape[-1] != 2 or coords.shape[0] != x.shape[0]:
        raise ShapeError(f"bilinear_sample expects [B,h,w,C] and [B,Q,2], got {x.shape}, {coords.shape}")
    b, h, w, c = x.shape
    q = coords.shape[1]
    dtype = x.dtype
    cd = coords.data.astype(dtype, copy=False)
    u = cd[..., 0] * w - 0.5
    v = cd[..., 1] * h - 0.5
    uc = np.clip(u, 0.0, w - 1)
    vc = np.clip(v, 0.0, h - 1)
    x0 = np.floor(uc).astype(np.int64)
    y0 = np.floor(vc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (uc - x0).astype(dtype)
    fy = (vc - y0).astype(dtype)

    base = (np.arange(b, dtype=np.int64) * (h * w))[:, None]
    corners = (base + y0 * w + x0, base + y0 * w + x1, base + y1 * w + x0, base + y1 * w + x1)
    weights = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)

    rows = np.concatenate([k.ravel() for k in corners])
    cols = np.tile(np.arange(b * q, dtype=np.int64), 4)
    vals = np.concatenate([wt.ravel() for wt in weights])
    # gather matrix: (B*h*w) x (B*Q); forward is its transpose applied to the texels
    gather = sp.csr_matrix((vals, (rows, cols)), shape=(b * h * w, b * q))
    flat = x.data.reshape(b * h * w, c)
    out = np.asarray(gather.T @ flat, dtype=dtype).reshape(b, q, c)

    def backward(g):
        gx = gc = None
        g2 = g.reshape(b * q, c)
        if x.requires_grad:
            gx = np.asarray(gather @ g2, dtype=dtype).reshape(b, h, w, c)
        if coords.requires_grad:
            v00, v01, v10, v11 = (flat[k.ravel()].reshape(b, q, c) for k in corners)
            du = ((1 - fy)[..., None] * (v01 - v00) + fy[..., None] * (v11 - v10))
            dv = ((1 - fx)[..., None] * (v10 - v00) + fx[..., None] * (v11 - v01))
            inside_u = ((u > 0) & (u < w - 1)).astype(dtype)
            inside_v = ((v > 0) & (v < h - 1)).astype(dtype)
            gu = (g * du).sum(axis=-1) * inside_u * w
            gv = (g * dv).sum(axis=-1) * inside_v * h
            gc = np.stack([gu, gv], axis=-1).astype(coords.dtype, copy=False)
        return gx, gc

    return make_result(out, (x, coords), backward)


# ------------------------------------------------- fused upsample + convolution
def _phase_taps(factor: int, kernel: int):
    """Per-axis grouping of (output phase, kernel tap) pairs by the low-res offset they read.

    Returns ``[(offset, phase_lo, phase_hi, M)]`` where ``M[p, t] = 1`` if phase
    ``phase_lo + p`` uses tap ``t`` at that offset.
    """
    r = kernel // 2
    groups = {}
    for a in range(factor):
        for t in range(kernel):
            groups.setdefault((a + t - r) // factor, []).append((a, t))
    out = []
    for off in sorted(groups):
        phases = sorted({a for a, _ in groups[off]})
        lo, hi = phases[0], phases[-1] + 1
        assert phases == list(range(lo, hi))
        m = np.zeros((hi - lo, kernel))
        for a, t in groups[off]:
            m[a - lo, t] = 1.0
        out.append((off, lo, hi, m))
    return out


def upsample_conv2d(x, weight, bias=None, factor: int = 2) -> Tensor:
    """``conv2d(upsample_nearest(x, factor), weight, bias)`` without forming the upsampled input.

    Each output phase of the nearest upsampling only reads a few low-res
    neighbours, so the kernel taps are folded per phase and applied at low
    resolution.  Results match the two-step form up to float rounding.
    """
    x = as_tensor(x)
    weight = as_tensor(weight, like=x)
    kh, kw, cin, cout = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"upsample_conv2d needs a square odd kernel, got {kh}x{kw}")
    b, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"upsample_conv2d channel mismatch: input has {c}, kernel expects {cin}")
    s = int(factor)
    taps = _phase_taps(s, kh)
    p = max(abs(t[0]) for t in taps)
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0)))
    wd = weight.data
    dt = x.dtype

    plan = []
    for oy, ay0, ay1, my in taps:
        for ox, ax0, ax1, mx in taps:
            weff = np.einsum("pk,ql,klio->ipqo", my, mx, wd).astype(dt).reshape(cin, -1)
            sl = (slice(None), slice(p + oy, p + oy + h), slice(p + ox, p + ox + w))
            plan.append((sl, (ay0, ay1, ax0, ax1), my, mx, weff))

    out = np.zeros((b, h, s, w, s, cout), dtype=dt)
    for sl, (ay0, ay1, ax0, ax1), _, _, weff in plan:
        t = (xp[sl].reshape(-1, cin) @ weff).reshape(b, h, w, ay1 - ay0, ax1 - ax0, cout)
        out[:, :, ay0:ay1, :, ax0:ax1, :] += t.transpose(0, 1, 3, 2, 4, 5)
    out = out.reshape(b, h * s, w * s, cout)
    if bias is not None:
        bias = as_tensor(bias, like=x)
        out += bias.data

    def backward(g):
        gx = gw = gb = None
        g6 = g.reshape(b, h, s, w, s, cout)
        gxp = np.zeros(xp.shape, dtype=dt) if x.requires_grad else None
        gw = np.zeros(wd.shape, dtype=np.float64) if weight.requires_grad else None
        for sl, (ay0, ay1, ax0, ax1), my, mx, weff in plan:
            gsub = g6[:, :, ay0:ay1, :, ax0:ax1, :].transpose(0, 1, 3, 2, 4, 5).reshape(b * h * w, -1)
            if gxp is not None:
                gxp[sl] += (gsub @ weff.T).reshape(b, h, w, cin)
            if gw is not None:
                dweff = (xp[sl].reshape(-1, cin).T @ gsub).reshape(cin, ay1 - ay0, ax1 - ax0, cout)
                gw += np.einsum("pk,ql,ipqo->klio", my, mx, dweff)
        if gxp is not None:
            gx = gxp[:, p : p + h, p : p + w, :]
        if gw is not None:
            gw = gw.astype(wd.dtype)
        if bias is not None and bias.requires_grad:
            gb = g.reshape(-1, cout).sum(axis=0)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, parents, backward)


def separable_resize(x, mat_h: np.ndarray, mat_w: np.ndarray) -> Tensor:
    """Apply fixed ``[H', H]`` and ``[W', W]`` resampling matrices to ``x: [B, H, W, C]``."""
    x = as_tensor(x)
    mat_h, mat_w = np.asarray(mat_h, dtype=np.float64), np.asarray(mat_w, dtype=np.float64)
    if x.ndim != 4 or mat_h.shape[1] != x.shape[1] or mat_w.shape[1] != x.shape[2]:
        raise ShapeError(f"resize matrices {mat_h.shape}, {mat_w.shape} do not fit input {x.shape}")
    out = np.einsum("oh,pw,bhwc->bopc", mat_h, mat_w, x.data, optimize=True).astype(x.dtype)

    def backward(g):
        return (np.einsum("oh,pw,bopc->bhwc", mat_h, mat_w, g, optimize=True).astype(x.dtype),)

    return make_result(out, (x,), backward)


# -------------------------------------------------------------- Gumbel-softmax
def gumbel_noise(shape, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Standard Gumbel draws ``-log(-log u)``, ``u ~ U(0, 1)``."""
    u = np.maximum(rng.random(shape), np.finfo(np.float64).tiny)
    return (-np.log(-np.log(u))).astype(dtype)


def gumbel_softmax_logits(logits, tau: float, rng: np.random.Generator | None = None, noise=None,
                          axis: int = -1) -> Tensor:
    """``softmax((logits + g) / tau)``; ``noise`` overrides the Gumbel draw ``g`` (pass 0 to disable)."""
    if not tau > 0:
        raise DomainError(f"Gumbel-softmax temperature must be positive, got {tau}")
    logits = as_tensor(logits)
    if noise is None:
        noise = gumbel_noise(logits.shape, rng if rng is not None else np.random.default_rng(), logits.dtype)
    return softmax((logits + np.asarray(noise, dtype=logits.dtype)) * (1.0 / tau), axis=axis)


def gumbel_softmax(v, tau: float, rng: np.random.Generator | None = None, noise=None, axis: int = -1) -> Tensor:
    """Gumbel-softmax of strictly positive scores ``v``: ``softmax((log v + g) / tau)``."""
    v = as_tensor(v)
    if not (v.data > 0).all():
        raise DomainError("Gumbel-softmax scores must be strictly positive")
    return gumbel_softmax_logits(log(v), tau, rng, noise, axis)
