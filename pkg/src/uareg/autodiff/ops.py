"""Differentiable primitives on :class:`Tensor`."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from uareg.autodiff.tensor import Tensor, note_branch, unbroadcast


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accumulate(unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
    return Tensor._make(a.data @ b.data, (a, b), "matmul", bw)


def add(a: Tensor, b) -> Tensor:
    return a + b


def mul(a: Tensor, b) -> Tensor:
    return a * b


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g):
        x._accumulate(g * out)
    return Tensor._make(out, (x,), "exp", bw)


def log(x: Tensor) -> Tensor:
    def bw(g):
        x._accumulate(g / x.data)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return Tensor._make(out, (x,), "log", bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    note_branch(mask)

    def bw(g):
        x._accumulate(g * mask)
    return Tensor._make(x.data * mask, (x,), "relu", bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        x._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))
    return Tensor._make(s, (x,), "softmax", bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Log-sum-exp stable log(softmax(x))."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bw(g):
        x._accumulate(g - np.exp(out) * g.sum(axis=axis, keepdims=True))
    return Tensor._make(out, (x,), "log_softmax", bw)


def reshape(x: Tensor, *shape) -> Tensor:
    return x.reshape(*shape)


def flatten(x: Tensor, start: int = 1) -> Tensor:
    return x.flatten(start)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, cuts, axis=axis)):
            if t.requires_grad:
                t._accumulate(part)
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis),
                        tuple(tensors), "concat", bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T + bias with weight shaped (out, in)."""
    out = matmul(x, weight.transpose())
    return out + bias if bias is not None else out


# -- convolution and pooling ----------------------------------------------------

def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """(B, C, Ho, Wo, kh, kw) strided view."""
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]


def _scatter_windows(dxp: np.ndarray, dwin: np.ndarray, sh: int, sw: int) -> None:
    """Add window-shaped gradients (B, C, Ho, Wo, kh, kw) back onto dxp."""
    _, _, ho, wo, kh, kw = dwin.shape
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += dwin[..., i, j]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, pad=0) -> Tensor:
    """Cross-correlation of (B, C, H, W) input with (O, C, kh, kw) weights."""
    b, c, h, w = x.shape
    o, c2, kh, kw = weight.shape
    if c != c2:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {c2}")
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ValueError(f"conv2d kernel {kh}x{kw} larger than padded input {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    win = _windows(xp, kh, kw, sh, sw)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(o, -1)
    out = (cols @ wmat.T).reshape(b, ho, wo, o).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
    out = np.ascontiguousarray(out)

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, o)
        if weight.requires_grad:
            weight._accumulate((gmat.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(b, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros(xp.shape, dtype=x.data.dtype)
            _scatter_windows(dxp, dcols, sh, sw)
            x._accumulate(dxp[:, :, ph:ph + h, pw:pw + w])
    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, "conv2d", bw)


def max_pool2d(x: Tensor, kernel=2, stride=None, pad=0) -> Tensor:
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    ph, pw = _pair(pad)
    b, c, h, w = x.shape
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ValueError(f"pooling window {kh}x{kw} larger than input {h}x{w}")
    xp = x.data
    if ph or pw:
        xp = np.pad(xp, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
    win = _windows(xp, kh, kw, sh, sw)
    flat = win.reshape(win.shape[:4] + (kh * kw,))
    idx = flat.argmax(axis=-1)
    note_branch(idx)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        dwin = np.zeros(flat.shape, dtype=x.data.dtype)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        dxp = np.zeros(xp.shape, dtype=x.data.dtype)
        _scatter_windows(dxp, dwin.reshape(win.shape), sh, sw)
        x._accumulate(dxp[:, :, ph:ph + h, pw:pw + w])
    return Tensor._make(np.ascontiguousarray(out), (x,), "max_pool2d", bw)


def avg_pool2d(x: Tensor, kernel=None, stride=None) -> Tensor:
    """Average pooling; ``kernel=None`` pools the whole spatial grid."""
    b, c, h, w = x.shape
    kh, kw = _pair(kernel) if kernel is not None else (h, w)
    sh, sw = _pair(stride if stride is not None else (kh, kw))
    if kh > h or kw > w:
        raise ValueError(f"pooling window {kh}x{kw} larger than input {h}x{w}")
    win = _windows(x.data, kh, kw, sh, sw)
    out = win.mean(axis=(-2, -1))

    def bw(g):
        dwin = np.broadcast_to((g / (kh * kw))[..., None, None], win.shape)
        dx = np.zeros(x.shape, dtype=x.data.dtype)
        _scatter_windows(dx, dwin, sh, sw)
        x._accumulate(dx)
    return Tensor._make(np.ascontiguousarray(out), (x,), "avg_pool2d", bw)


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, training: bool, momentum: float = 0.1,
                 eps: float = 1e-5) -> Tensor:
    """Per-channel normalization of (B, C, H, W).

    Training uses batch statistics and updates the running buffers in
    place (unbiased variance); eval uses the running buffers.
    """
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    if training:
        n = x.data.size // x.shape[1]
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    out = out.astype(x.data.dtype, copy=False)

    def bw(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=axes))
        if x.requires_grad:
            gx = g * gamma.data.reshape(shape)
            if training:
                gx = (gx - gx.mean(axis=axes, keepdims=True)
                      - xhat * (gx * xhat).mean(axis=axes, keepdims=True))
            x._accumulate(gx * inv.reshape(shape))
    return Tensor._make(out, (x, gamma, beta), "batch_norm2d", bw)


# -- attention ---------------------------------------------------------------------

def _split_heads(t: Tensor, heads: int) -> Tensor:
    b, n, d = t.shape
    return t.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, heads: int = 1,
                                 return_weights: bool = False):
    """Multi-head attention on (B, Lq, D) queries over (B, L, D) keys/values.

    Heads split the feature axis; outputs are concatenated back to
    (B, Lq, Dv).
    """
    if k.shape[-1] != q.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(f"attention shape mismatch q{q.shape} k{k.shape} v{v.shape}")
    if q.shape[-1] % heads or v.shape[-1] % heads:
        raise ValueError(f"dims not divisible by {heads} heads")
    qh, kh, vh = (_split_heads(t, heads) for t in (q, k, v))
    scale = 1.0 / math.sqrt(q.shape[-1] // heads)
    weights = softmax(matmul(qh, kh.transpose(0, 1, 3, 2)) * scale, axis=-1)
    out = matmul(weights, vh)
    b, _, lq, dh = out.shape
    out = out.transpose(0, 2, 1, 3).reshape(b, lq, heads * dh)
    return (out, weights) if return_weights else out
