"""Two-stage temporal aggregation guided by inconsistency levels.

Stage one segments the frame features by cumulative inconsistency against
an adaptive capacity threshold, aggregates each segment (mean ++ std),
and models the segment sequence with graph attention followed by a GRU.
Stage two keeps the most informative hidden states via self-attention
ranking and repeats the temporal modeling with independent parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from srvqa.nn import ParamStore
from srvqa.nn import layers as L
from srvqa.nn import tensor as T
from srvqa.nn.tensor import Tensor


class SegmentationError(ValueError):
    pass


@dataclass
class SegmentSet:
    segments: list  # [(lo, hi), ...) covering [0, F)
    aggregated: Tensor  # (n_segments, 2 d)


def extend_frame_levels(levels: np.ndarray, num_frames: int) -> np.ndarray:
    """Extend F-1 pairwise levels to F by replicating the last one."""
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size == num_frames:
        return levels
    if levels.size != num_frames - 1:
        raise SegmentationError(f"{levels.size} levels for {num_frames} frames")
    return np.concatenate([levels, levels[-1:]])


def segment_ranges(frame_levels: np.ndarray, threshold: float) -> list:
    """Greedy capacity split: flush once the running level sum reaches
    the threshold; a trailing partial segment is kept."""
    if threshold <= 0:
        raise SegmentationError("threshold must be positive")
    ranges = []
    start = 0
    acc = 0.0
    for j, level in enumerate(frame_levels):
        acc += level
        if acc >= threshold:
            ranges.append((start, j + 1))
            start = j + 1
            acc = 0.0
    if start < len(frame_levels):
        ranges.append((start, len(frame_levels)))
    return ranges


def fixed_ranges(num_frames: int, size: int) -> list:
    """Fixed-length segmentation used by the no-guidance ablation."""
    if size < 1:
        raise SegmentationError("segment size must be >= 1")
    return [(lo, min(lo + size, num_frames)) for lo in range(0, num_frames, size)]


def aggregate_segments(features: Tensor, ranges: list) -> Tensor:
    """Per segment: concat(mean, population std) over its feature rows."""
    rows = []
    for lo, hi in ranges:
        seg = T.take(features, np.arange(lo, hi), axis=0)
        mu = T.mean(seg, axis=0)
        sd = T.std(seg, axis=0) if hi - lo > 1 else T.mul(mu, 0.0)
        rows.append(T.reshape(T.concat([mu, sd], axis=0), (1, 2 * features.shape[1])))
    return T.concat(rows, axis=0)


def capacity_segment(features: Tensor, frame_levels: np.ndarray, threshold: float) -> SegmentSet:
    if features.shape[0] == 0:
        raise SegmentationError("empty feature sequence")
    if len(frame_levels) != features.shape[0]:
        raise SegmentationError("frame levels not aligned to feature rows")
    ranges = segment_ranges(np.asarray(frame_levels, dtype=np.float64), threshold)
    return SegmentSet(ranges, aggregate_segments(features, ranges))


def build_adjacency(nodes: np.ndarray, k: int | None = None) -> np.ndarray:
    """Cosine top-k neighbours plus self-loops, symmetrized by union.

    Zero-norm rows fall back to their temporal neighbours so no node is
    isolated.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    n = nodes.shape[0]
    if n < 1:
        raise SegmentationError("need at least one node")
    if k is None:
        k = min(3, n - 1)
    adj = np.eye(n)
    if n == 1:
        return adj
    norms = np.linalg.norm(nodes, axis=1)
    ok = norms > 0
    unit = np.where(ok[:, None], nodes / np.where(ok, norms, 1.0)[:, None], 0.0)
    sim = unit @ unit.T
    np.fill_diagonal(sim, -np.inf)
    for i in range(n):
        if ok[i] and k >= 1:
            neighbours = np.argsort(-sim[i], kind="stable")[:k]
            neighbours = [j for j in neighbours if ok[j]]
        else:
            neighbours = []
        if not neighbours:
            neighbours = [j for j in (i - 1, i + 1) if 0 <= j < n]
        for j in neighbours:
            adj[i, j] = 1.0
            adj[j, i] = 1.0
    return adj


def graph_attention_layer(
    nodes: Tensor,
    adj: np.ndarray,
    store: ParamStore,
    name: str,
    d_in: int,
    d_out: int,
    leaky_slope: float = 0.2,
) -> Tensor:
    """Masked graph attention: softmax over each node's neighbour set."""
    adj = np.asarray(adj)
    if np.any(np.diag(adj) <= 0):
        raise SegmentationError("adjacency must include self-loops")
    w = store.param(f"{name}.w", (d_in, d_out), fan_in=d_in)
    a_src = store.param(f"{name}.a_src", (d_out, 1), fan_in=2 * d_out)
    a_dst = store.param(f"{name}.a_dst", (d_out, 1), fan_in=2 * d_out)
    wh = T.matmul(nodes, w)  # (n, d_out)
    e_src = T.matmul(wh, a_src)  # (n, 1) contribution of Wh_i
    e_dst = T.matmul(wh, a_dst)  # (n, 1) contribution of Wh_j
    scores = T.leaky_relu(T.add(e_src, T.transpose(e_dst)), leaky_slope)
    mask = np.where(adj > 0, 0.0, -1e30)
    alpha = T.softmax(T.add(scores, Tensor(mask)), axis=-1)
    return T.elu(T.matmul(alpha, wh))


@dataclass
class TemporalConfig:
    d_graph: int = 32
    d_hidden: int = 32
    topk_ratio: float = 0.5
    gamma: float = 0.5
    adjacency_k: int = 3


def temporal_model(
    aggregated: Tensor, store: ParamStore, name: str, d_in: int, cfg: TemporalConfig
):
    """Graph attention over segments, GRU over their order, sigmoid score.

    Returns the (n, d_hidden) hidden sequence and the scalar score tensor.
    """
    adj = build_adjacency(aggregated.data, k=min(cfg.adjacency_k, aggregated.shape[0] - 1) or None)
    h = graph_attention_layer(aggregated, adj, store, f"{name}.gat", d_in, cfg.d_graph)
    hidden = L.gru_sequence(h, store, f"{name}.gru", cfg.d_graph, cfg.d_hidden)
    pooled = T.reshape(T.mean(hidden, axis=0), (1, cfg.d_hidden))
    score = T.sigmoid(L.linear(pooled, store, f"{name}.head", cfg.d_hidden, 1))
    return hidden, T.reshape(score, ())


def informative_filter(hidden: Tensor, store: ParamStore, name: str, ratio: float):
    """Keep the top-K rows by self-attention importance, original order.

    Importance is the column mean of the attention matrix; ties keep the
    earlier index. Returns (filtered rows, kept indices).
    """
    if not 0.0 < ratio <= 1.0:
        raise SegmentationError("ratio must be in (0, 1]")
    n, d = hidden.shape
    attn = L.attention_matrix(hidden, store, f"{name}.sa", d)
    importance = attn.data.mean(axis=0)
    k = max(1, math.ceil(ratio * n))
    keep = np.sort(np.argsort(-importance, kind="stable")[:k])
    return T.take(hidden, keep, axis=0), keep


def fuse_scores(s1, s2, gamma: float = 0.5):
    """Convex combination of the two stage scores."""
    if isinstance(s1, Tensor) or isinstance(s2, Tensor):
        return T.add(T.mul(T.as_tensor(s1), gamma), T.mul(T.as_tensor(s2), 1.0 - gamma))
    return gamma * s1 + (1.0 - gamma) * s2
