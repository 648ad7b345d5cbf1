"""Learned building blocks composed from the autodiff primitives."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .optim import ParamStore
from .tensor import Tensor, ShapeError


def linear(x: Tensor, store: ParamStore, name: str, d_in: int, d_out: int, bias: bool = True) -> Tensor:
    w = store.param(f"{name}.w", (d_in, d_out), fan_in=d_in)
    out = T.matmul(x, w)
    if bias:
        b = store.param(f"{name}.b", (d_out,), fan_in=d_in)
        out = T.add(out, b)
    return out


def mlp(x: Tensor, store: ParamStore, name: str, d: int, hidden: int) -> Tensor:
    h = T.relu(linear(x, store, f"{name}.fc1", d, hidden))
    return linear(h, store, f"{name}.fc2", hidden, d)


def layer_norm(x: Tensor, store: ParamStore, name: str, d: int) -> Tensor:
    gamma = store.param(f"{name}.gamma", (d,), const=1.0)
    beta = store.param(f"{name}.beta", (d,), zero=True)
    return T.layer_norm(x, gamma, beta)


def multi_head_attention(
    x: Tensor, store: ParamStore, name: str, d: int, heads: int, d_out: int | None = None
) -> Tensor:
    """Scaled dot-product self-attention over the second-to-last axis.

    ``x`` is (..., n, d); heads must divide d.
    """
    if d % heads != 0:
        raise ShapeError(f"model dim {d} not divisible by {heads} heads")
    d_out = d if d_out is None else d_out
    dh = d // heads
    q = linear(x, store, f"{name}.q", d, d)
    k = linear(x, store, f"{name}.k", d, d)
    v = linear(x, store, f"{name}.v", d, d)

    def split(t):
        lead = t.shape[:-2]
        n = t.shape[-2]
        t = T.reshape(t, lead + (n, heads, dh))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return T.transpose(t, axes)  # (..., heads, n, dh)

    qh, kh, vh = split(q), split(k), split(v)
    scores = T.mul(T.matmul(qh, T.transpose(kh, tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2))), 1.0 / np.sqrt(dh))
    attn = T.softmax(scores, axis=-1)
    ctx = T.matmul(attn, vh)  # (..., heads, n, dh)
    lead = x.shape[:-2]
    n = x.shape[-2]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = T.transpose(ctx, axes)  # (..., n, heads, dh)
    ctx = T.reshape(ctx, lead + (n, d))
    return linear(ctx, store, f"{name}.out", d, d_out)


def attention_matrix(x: Tensor, store: ParamStore, name: str, d: int) -> Tensor:
    """Single-head attention weight matrix softmax(QK^T / sqrt(d))."""
    q = linear(x, store, f"{name}.q", d, d)
    k = linear(x, store, f"{name}.k", d, d)
    scores = T.mul(T.matmul(q, T.transpose(k)), 1.0 / np.sqrt(d))
    return T.softmax(scores, axis=-1)


def gru_cell(x_t: Tensor, h_prev: Tensor, store: ParamStore, name: str, d_in: int, d_h: int) -> Tensor:
    """Standard GRU step: h = (1 - z) * h_prev + z * h_tilde."""
    def gate(tag):
        wx = store.param(f"{name}.{tag}.wx", (d_in, d_h), fan_in=d_in)
        wh = store.param(f"{name}.{tag}.wh", (d_h, d_h), fan_in=d_h)
        b = store.param(f"{name}.{tag}.b", (d_h,), zero=True)
        return wx, wh, b

    wxz, whz, bz = gate("z")
    wxr, whr, br = gate("r")
    wxh, whh, bh = gate("h")
    z = T.sigmoid(T.add(T.add(T.matmul(x_t, wxz), T.matmul(h_prev, whz)), bz))
    r = T.sigmoid(T.add(T.add(T.matmul(x_t, wxr), T.matmul(h_prev, whr)), br))
    h_tilde = T.tanh(T.add(T.add(T.matmul(x_t, wxh), T.matmul(T.mul(r, h_prev), whh)), bh))
    return T.add(T.mul(T.add(Tensor(1.0), T.mul(z, -1.0)), h_prev), T.mul(z, h_tilde))


def gru_sequence(xs: Tensor, store: ParamStore, name: str, d_in: int, d_h: int) -> Tensor:
    """Run a GRU over the rows of (n, d_in); h0 = 0; returns (n, d_h)."""
    h = Tensor(np.zeros((1, d_h)))
    outs = []
    for t in range(xs.shape[0]):
        x_t = T.reshape(T.take(xs, [t], axis=0), (1, d_in))
        h = gru_cell(x_t, h, store, name, d_in, d_h)
        outs.append(h)
    return T.reshape(T.concat(outs, axis=0), (xs.shape[0], d_h))


def sub_pixel_upsample(x: Tensor, r: int) -> Tensor:
    """Pixel shuffle: (C*r^2, h, w) -> (C, r*h, r*w); exact and bijective."""
    c_r2, h, w = x.shape
    if c_r2 % (r * r) != 0:
        raise ShapeError(f"channels {c_r2} not divisible by r^2={r * r}")
    c = c_r2 // (r * r)
    t = T.reshape(x, (c, r, r, h, w))
    t = T.transpose(t, (0, 3, 1, 4, 2))  # (c, h, r, w, r)
    return T.reshape(t, (c, h * r, w * r))


def sub_pixel_downsample(x: Tensor, r: int) -> Tensor:
    """Exact inverse of :func:`sub_pixel_upsample`."""
    c, hr, wr = x.shape
    h, w = hr // r, wr // r
    t = T.reshape(x, (c, h, r, w, r))
    t = T.transpose(t, (0, 2, 4, 1, 3))  # (c, r, r, h, w)
    return T.reshape(t, (c * r * r, h, w))


def pixel_shuffle_nhwc(x: Tensor, r: int) -> Tensor:
    """Channel-last batched pixel shuffle: (B, h, w, c*r^2) -> (B, rh, rw, c)."""
    b, h, w, c_r2 = x.shape
    if c_r2 % (r * r) != 0:
        raise ShapeError(f"channels {c_r2} not divisible by r^2={r * r}")
    c = c_r2 // (r * r)
    t = T.reshape(x, (b, h, w, r, r, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))  # (b, h, r, w, r, c)
    return T.reshape(t, (b, h * r, w * r, c))


def avg_pool_nhwc(x: Tensor, r: int) -> Tensor:
    """Average r x r blocks of a (B, h, w, c) tensor."""
    b, h, w, c = x.shape
    t = T.reshape(x, (b, h // r, r, w // r, r, c))
    return T.mean(t, axis=(2, 4))


def conv2d(
    x: Tensor,
    store: ParamStore,
    name: str,
    c_in: int,
    c_out: int,
    kernel: int = 3,
    stride: int = 1,
    pad: int | None = None,
    bias: bool = True,
) -> Tensor:
    """2-D convolution on (B, H, W, C) via shifted slices + matmul."""
    pad = kernel // 2 if pad is None else pad
    if pad:
        x = T.pad2d(x, pad, pad)
    b, h, w, _ = x.shape
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    patches = []
    for i in range(kernel):
        for j in range(kernel):
            patches.append(x[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :])
    cols = T.concat(patches, axis=-1)  # (B, OH, OW, k*k*c_in)
    wgt = store.param(f"{name}.w", (kernel * kernel * c_in, c_out), fan_in=kernel * kernel * c_in)
    out = T.matmul(cols, wgt)
    if bias:
        bprm = store.param(f"{name}.b", (c_out,), fan_in=kernel * kernel * c_in)
        out = T.add(out, bprm)
    return out
