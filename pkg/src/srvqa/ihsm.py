"""Spatial feature extraction over inconsistency-highlighted videos.

Two branches: a windowed-attention transformer for the coarse-band
highlight (with deformable-window blocks in its final stage) and a small
residual CNN for the fine-band highlight. Their per-frame features are
concatenated into the spatial feature sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from srvqa.nn import ParamStore
from srvqa.nn import layers as L
from srvqa.nn import tensor as T
from srvqa.nn.tensor import ShapeError, Tensor


@dataclass
class DwSaConfig:
    window: int = 2
    shift: int = 1
    upsample_r: int = 2
    heads: int = 2
    offset_clamp: float = 1.0

    def validate(self, channels: int):
        if self.shift >= self.window:
            raise ShapeError("shift must be smaller than window")
        if channels % (self.upsample_r**2) != 0:
            raise ShapeError(
                f"{channels} channels not divisible by r^2={self.upsample_r ** 2}"
            )


@dataclass
class CoarseConfig:
    input_size: int = 56
    in_channels: int = 3
    patch: int = 7
    embed: int = 16
    stages: int = 3
    window: int = 4
    heads: int = 2
    mlp_ratio: int = 2
    dwsa: DwSaConfig = field(default_factory=DwSaConfig)

    @property
    def d_out(self) -> int:
        return self.embed * 2 ** (self.stages - 1)


@dataclass
class FineConfig:
    in_channels: int = 3
    channels: tuple = (16, 32, 64)

    @property
    def d_out(self) -> int:
        return self.channels[-1]


@dataclass
class FeatureSequence:
    features: Tensor  # (F, d_C + d_F)
    d_coarse: int
    d_fine: int


def _partition_windows(x: Tensor, wsz: int) -> Tensor:
    """(B, g, g, c) -> (B * nw, wsz, wsz, c)."""
    b, g, _, c = x.shape
    n = g // wsz
    t = T.reshape(x, (b, n, wsz, n, wsz, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (b * n * n, wsz, wsz, c))


def _merge_windows(x: Tensor, b: int, g: int, wsz: int) -> Tensor:
    n = g // wsz
    c = x.shape[-1]
    t = T.reshape(x, (b, n, n, wsz, wsz, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (b, g, g, c))


def window_attention(
    x: Tensor, store: ParamStore, name: str, dim: int, wsz: int, heads: int, shift: int = 0
) -> Tensor:
    """(Shifted) window multi-head self-attention on a (B, g, g, c) grid."""
    b, g = x.shape[0], x.shape[1]
    wsz = min(wsz, g)
    if shift:
        x = T.roll(x, (-shift, -shift), axis=(1, 2))
    wins = _partition_windows(x, wsz)
    tokens = T.reshape(wins, (wins.shape[0], wsz * wsz, dim))
    out = L.multi_head_attention(tokens, store, f"{name}.attn", dim, heads)
    out = T.reshape(out, (wins.shape[0], wsz, wsz, dim))
    out = _merge_windows(out, b, g, wsz)
    if shift:
        out = T.roll(out, (shift, shift), axis=(1, 2))
    return out


def dw_sa_block(
    x: Tensor,
    store: ParamStore,
    name: str,
    dim: int,
    cfg: DwSaConfig,
    shift: int = 0,
    force_zero_offsets: bool = False,
) -> Tensor:
    """Deformable-window super-attention on a (B, g, g, c) grid.

    Each window predicts one clamped (dx, dy) offset from its mean token,
    is resampled at that offset (window-local, edge clamp), pixel-shuffled
    up by r, attended at the upsampled resolution, average-pooled back, and
    projected to the original channel count. With r=1 and zero offsets this
    reduces exactly to :func:`window_attention`.
    """
    b, g = x.shape[0], x.shape[1]
    wsz = min(cfg.window, g)
    cfg.validate(dim)
    r = cfg.upsample_r
    if g % wsz != 0:
        raise ShapeError(f"window {wsz} does not tile grid {g}")
    if shift:
        x = T.roll(x, (-shift, -shift), axis=(1, 2))
    wins = _partition_windows(x, wsz)  # (B*nw, wsz, wsz, c)

    mean_tok = T.mean(T.reshape(wins, (wins.shape[0], wsz * wsz, dim)), axis=1)
    offsets = L.linear(mean_tok, store, f"{name}.offset", dim, 2)
    offsets = T.clip(offsets, -cfg.offset_clamp, cfg.offset_clamp)
    if force_zero_offsets:
        offsets = T.mul(offsets, 0.0)
    wins = T.bilinear_shift_batch(wins, offsets)

    up = L.pixel_shuffle_nhwc(wins, r)  # (B*nw, r*wsz, r*wsz, c/r^2)
    c_up = dim // (r * r)
    tokens = T.reshape(up, (up.shape[0], (r * wsz) ** 2, c_up))
    heads = cfg.heads if c_up % cfg.heads == 0 else 1
    out = L.multi_head_attention(tokens, store, f"{name}.attn", c_up, heads)
    out = T.reshape(out, (up.shape[0], r * wsz, r * wsz, c_up))
    out = L.avg_pool_nhwc(out, r)  # (B*nw, wsz, wsz, c/r^2)
    if r > 1:
        out = L.linear(out, store, f"{name}.proj_back", c_up, dim)
    out = _merge_windows(out, b, g, wsz)
    if shift:
        out = T.roll(out, (shift, shift), axis=(1, 2))
    return out


def _transformer_pair(
    x: Tensor,
    store: ParamStore,
    name: str,
    dim: int,
    cfg: CoarseConfig,
    use_dwsa: bool,
) -> Tensor:
    """Two consecutive blocks: plain-window attention then the shifted
    variant (deformable in the final stage), each with its MLP."""
    wsz = min(cfg.window, x.shape[1])
    shift = max(1, wsz // 2) if x.shape[1] > wsz else 0

    ln = lambda t, tag: L.layer_norm(t, store, f"{name}.{tag}.ln", dim)
    h = T.add(x, window_attention(ln(x, "b1"), store, f"{name}.b1", dim, wsz, cfg.heads))
    h = T.add(h, L.mlp(ln(h, "b1m"), store, f"{name}.b1.mlp", dim, dim * cfg.mlp_ratio))
    if use_dwsa:
        dcfg = DwSaConfig(
            window=wsz,
            shift=min(cfg.dwsa.shift, max(wsz - 1, 0)),
            upsample_r=cfg.dwsa.upsample_r,
            heads=cfg.dwsa.heads,
            offset_clamp=cfg.dwsa.offset_clamp,
        )
        attn2 = dw_sa_block(ln(h, "b2"), store, f"{name}.b2", dim, dcfg, shift=shift)
    else:
        attn2 = window_attention(ln(h, "b2"), store, f"{name}.b2", dim, wsz, cfg.heads, shift=shift)
    h = T.add(h, attn2)
    h = T.add(h, L.mlp(ln(h, "b2m"), store, f"{name}.b2.mlp", dim, dim * cfg.mlp_ratio))
    return h


def coarse_extractor(frames: np.ndarray, store: ParamStore, cfg: CoarseConfig) -> Tensor:
    """Per-frame transformer features: (F, S, S, C) -> (F, d_C).

    Deformable-window blocks replace the plain shifted block in the final
    stage only; frames are processed as a batch so identical frames map to
    identical rows.
    """
    f, s, s2, c = frames.shape
    if s != cfg.input_size or s2 != cfg.input_size or c != cfg.in_channels:
        raise ShapeError(
            f"expected (F, {cfg.input_size}, {cfg.input_size}, {cfg.in_channels}), got {frames.shape}"
        )
    if s % cfg.patch != 0:
        raise ShapeError(f"patch {cfg.patch} does not tile input {s}")
    g = s // cfg.patch
    x = Tensor(frames)
    t = T.reshape(x, (f, g, cfg.patch, g, cfg.patch, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    t = T.reshape(t, (f, g, g, cfg.patch * cfg.patch * c))
    h = L.linear(t, store, "coarse.embed", cfg.patch * cfg.patch * c, cfg.embed)

    dim = cfg.embed
    for stage in range(cfg.stages):
        h = _transformer_pair(
            h, store, f"coarse.s{stage}", dim, cfg, use_dwsa=(stage == cfg.stages - 1)
        )
        if stage < cfg.stages - 1:
            g = h.shape[1]
            t = T.reshape(h, (f, g // 2, 2, g // 2, 2, dim))
            t = T.transpose(t, (0, 1, 3, 2, 4, 5))
            t = T.reshape(t, (f, g // 2, g // 2, 4 * dim))
            h = L.linear(t, store, f"coarse.merge{stage}", 4 * dim, 2 * dim)
            dim *= 2
    h = L.layer_norm(h, store, "coarse.norm", dim)
    return T.mean(h, axis=(1, 2))  # (F, d_C)


def _res_block(x: Tensor, store: ParamStore, name: str, c_in: int, c_out: int, stride: int) -> Tensor:
    y = T.relu(L.conv2d(x, store, f"{name}.conv1", c_in, c_out, 3, stride))
    y = L.conv2d(y, store, f"{name}.conv2", c_out, c_out, 3, 1)
    shortcut = x
    if stride != 1 or c_in != c_out:
        shortcut = L.conv2d(x, store, f"{name}.short", c_in, c_out, 1, stride, pad=0, bias=False)
    return T.relu(T.add(y, shortcut))


def fine_extractor(frames: np.ndarray, store: ParamStore, cfg: FineConfig) -> Tensor:
    """Per-frame CNN features at native resolution: (F, H, W, C) -> (F, d_F)."""
    if frames.ndim != 4 or frames.shape[-1] != cfg.in_channels:
        raise ShapeError(f"expected (F, H, W, {cfg.in_channels}), got {frames.shape}")
    x = Tensor(frames)
    h = T.relu(L.conv2d(x, store, "fine.stem", cfg.in_channels, cfg.channels[0], 3, 2))
    c_prev = cfg.channels[0]
    for i, c in enumerate(cfg.channels[1:], start=1):
        h = _res_block(h, store, f"fine.res{i}", c_prev, c, stride=2)
        c_prev = c
    return T.mean(h, axis=(1, 2))  # (F, d_F)


def fuse_spatial(coarse: Tensor, fine: Tensor) -> FeatureSequence:
    """Row-wise concatenation, coarse features first."""
    if coarse.shape[0] != fine.shape[0]:
        raise ShapeError(f"frame counts differ: {coarse.shape[0]} vs {fine.shape[0]}")
    return FeatureSequence(
        features=T.concat([coarse, fine], axis=1),
        d_coarse=coarse.shape[1],
        d_fine=fine.shape[1],
    )
