"""Temporal-inconsistency math.

Given aligned reference/distorted videos, computes per-pair flow-difference
maps and their 2-norms, splits those maps into coarse/fine bands with
complementary Gaussian frequency masks, re-weights the distorted video to
highlight inconsistent regions, and condenses everything into frame- and
video-level inconsistency scores that drive the adaptive segmentation
threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from srvqa.flow import FarnebackParams, direction_histogram, farneback_flow, flow_magnitude
from srvqa.media import VideoTensor, to_grayscale

DEFAULT_CUTOFF_FRAC = 0.05
DEFAULT_ALPHA = 0.5
DEFAULT_BINS = 16
DEFAULT_TAU = 5.0
DEFAULT_ETA = 4.0


class InconsistencyError(ValueError):
    pass


@dataclass
class FilterMask:
    """Gaussian low-pass mask over frequency indices; high-pass is 1 - low."""

    h_low: np.ndarray
    cutoff: float

    @property
    def h_high(self) -> np.ndarray:
        return 1.0 - self.h_low


@dataclass
class InconsistencyBundle:
    delta_flow: np.ndarray  # (F-1, H, W, 2)
    vi: np.ndarray  # (F-1, H, W)
    vi_coarse: np.ndarray | None = None
    vi_fine: np.ndarray | None = None
    frame_levels: np.ndarray | None = None
    video_level: float | None = None


def temporal_inconsistency(
    v_ref: VideoTensor, v_dist: VideoTensor, params: FarnebackParams | None = None
) -> InconsistencyBundle:
    """Flow-difference maps between consecutive frames of the two videos."""
    if v_ref.frames.shape != v_dist.frames.shape:
        raise InconsistencyError(
            f"videos not aligned: {v_ref.frames.shape} vs {v_dist.frames.shape}"
        )
    ref_gray = to_grayscale(v_ref).frames[..., 0]
    dist_gray = to_grayscale(v_dist).frames[..., 0]
    n_pairs = ref_gray.shape[0] - 1
    delta = np.empty((n_pairs,) + ref_gray.shape[1:] + (2,))
    for t in range(n_pairs):
        f_ref = farneback_flow(ref_gray[t], ref_gray[t + 1], params)
        f_dist = farneback_flow(dist_gray[t], dist_gray[t + 1], params)
        delta[t] = f_ref.vectors - f_dist.vectors
    vi = np.sqrt(delta[..., 0] ** 2 + delta[..., 1] ** 2)
    return InconsistencyBundle(delta_flow=delta, vi=vi)


def gaussian_lowpass_mask(h: int, w: int, cutoff_frac: float = DEFAULT_CUTOFF_FRAC) -> FilterMask:
    """Centered Gaussian mask exp(-D^2 / (2 D0^2)) in frequency-index units.

    D0 is ``cutoff_frac`` of the longer frame dimension; the mask is laid
    out in unshifted FFT order so h_low at the zero frequency is exactly 1.
    """
    if not 0.0 < cutoff_frac < 0.5:
        raise InconsistencyError("cutoff_frac must be in (0, 0.5)")
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.fftfreq(w) * w
    d2 = fy[:, None] ** 2 + fx[None, :] ** 2
    d0 = cutoff_frac * max(h, w)
    return FilterMask(np.exp(-d2 / (2.0 * d0**2)), cutoff=d0)


def decouple(vi: np.ndarray, mask: FilterMask):
    """Split scalar maps into complementary low/high frequency bands."""
    vi = np.asarray(vi, dtype=np.float64)
    maps = vi if vi.ndim == 3 else vi[None]
    if maps.shape[1:] != mask.h_low.shape:
        raise InconsistencyError(f"mask {mask.h_low.shape} does not match maps {maps.shape[1:]}")
    spectra = np.fft.fft2(maps, axes=(1, 2))
    coarse = np.fft.ifft2(spectra * mask.h_low[None], axes=(1, 2)).real
    fine = np.fft.ifft2(spectra * mask.h_high[None], axes=(1, 2)).real
    if vi.ndim == 2:
        return coarse[0], fine[0]
    return coarse, fine


def highlight(v_dist: VideoTensor, maps: np.ndarray) -> VideoTensor:
    """Re-weight the distorted video by normalized inconsistency maps.

    Weights are min-max normalized jointly over all maps of the video
    (constant maps degrade to zero weight); the last frame reuses the final
    map. The doubled dynamic range is rescaled back into [0, 1].
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3 or maps.shape[0] != v_dist.num_frames - 1:
        raise InconsistencyError(f"expected {v_dist.num_frames - 1} maps, got shape {maps.shape}")
    if maps.shape[1:] != (v_dist.height, v_dist.width):
        raise InconsistencyError("map dimensions do not match frames")
    lo, hi = maps.min(), maps.max()
    if hi > lo:
        weights = (maps - lo) / (hi - lo)
    else:
        weights = np.zeros_like(maps)
    weights = np.concatenate([weights, weights[-1:]], axis=0)
    boosted = weights[..., None] * v_dist.frames + v_dist.frames
    # rescale by the peak gain so zero maps stay a bitwise identity
    return VideoTensor(boosted / (1.0 + weights.max()), v_dist.source_depth, v_dist.fps)


def frame_inconsistency_level(
    delta_flow_frame: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    bins: int = DEFAULT_BINS,
    mag_floor: float = 1e-3,
) -> float:
    """Weighted mix of magnitude spread and direction-histogram spread."""
    if not 0.0 <= alpha <= 1.0:
        raise InconsistencyError("alpha must lie in [0, 1]")
    mag = flow_magnitude(delta_flow_frame)
    hist = direction_histogram(delta_flow_frame, bins=bins, mag_floor=mag_floor)
    return float(alpha * mag.std() + (1.0 - alpha) * hist.std())


def video_inconsistency_level(frame_levels) -> float:
    """Mean plus population standard deviation of the frame levels."""
    levels = np.asarray(frame_levels, dtype=np.float64)
    if levels.size == 0:
        raise InconsistencyError("need at least one frame level")
    return float(levels.mean() + levels.std())


def memory_threshold(
    video_level: float,
    dataset_min: float,
    dataset_max: float,
    tau: float = DEFAULT_TAU,
    eta: float = DEFAULT_ETA,
) -> float:
    """Adaptive segment capacity: high inconsistency -> low threshold.

    Min-max normalizes the video level against the training-split range
    (clamping at inference) and maps it linearly from tau down to tau - eta.
    """
    if dataset_max < dataset_min:
        raise InconsistencyError("dataset_max must be >= dataset_min")
    if dataset_max == dataset_min:
        return float(tau)
    c = min(max(video_level, dataset_min), dataset_max)
    return float(tau - eta * (c - dataset_min) / (dataset_max - dataset_min))


def analyze(
    v_ref: VideoTensor,
    v_dist: VideoTensor,
    params: FarnebackParams | None = None,
    cutoff_frac: float = DEFAULT_CUTOFF_FRAC,
    alpha: float = DEFAULT_ALPHA,
    bins: int = DEFAULT_BINS,
) -> InconsistencyBundle:
    """Full chain: maps, decoupled bands, frame and video levels."""
    bundle = temporal_inconsistency(v_ref, v_dist, params)
    mask = gaussian_lowpass_mask(v_dist.height, v_dist.width, cutoff_frac)
    bundle.vi_coarse, bundle.vi_fine = decouple(bundle.vi, mask)
    bundle.frame_levels = np.array(
        [frame_inconsistency_level(df, alpha=alpha, bins=bins) for df in bundle.delta_flow]
    )
    bundle.video_level = video_inconsistency_level(bundle.frame_levels)
    return bundle
