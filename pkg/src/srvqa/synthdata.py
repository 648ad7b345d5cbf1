"""Synthetic clip-pair generator with controlled temporal jitter.

A reference clip pans smoothly over a textured pattern; the distorted
clip samples the same pattern with an extra random sub-pixel translation
per frame. The jitter amplitude is ground truth for both the measured
inconsistency level and the monotone quality label mos = 1 - amp/amp_max.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from srvqa.media import VideoTensor, load_video, save_raw_planar
from srvqa.traineval import LabeledClip

PATTERNS = ("checker", "gradient_drift", "noise_texture")
DEFAULT_AMP_MAX = 4.0


@dataclass
class SynthSpec:
    n_clips: int = 100
    frames: int = 16
    h: int = 48
    w: int = 48
    pattern: str = "noise_texture"
    jitter_amp: float = 1.0
    flicker_amp: float = 0.0
    seed: int = 0
    channels: int = 1
    amp_max: float = DEFAULT_AMP_MAX

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.frames < 4:
            raise ValueError("need at least 4 frames")
        if self.jitter_amp < 0 or self.flicker_amp < 0:
            raise ValueError("amplitudes must be >= 0")
        if self.amp_max <= 0:
            raise ValueError("amp_max must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _base_texture(spec: SynthSpec, rng: np.random.Generator, margin: int) -> np.ndarray:
    """Oversized texture the clip pans across; smooth enough for flow."""
    hh, ww = spec.h + 2 * margin, spec.w + 2 * margin
    yy, xx = np.mgrid[0:hh, 0:ww].astype(np.float64)
    if spec.pattern == "checker":
        period = 8.0
        img = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * yy / period) * np.sin(2 * np.pi * xx / period))
        img = ndimage.gaussian_filter(img, 1.0)
    elif spec.pattern == "gradient_drift":
        img = np.zeros((hh, ww))
        for _ in range(4):
            fy, fx = rng.uniform(0.02, 0.15, 2)
            phase = rng.uniform(0, 2 * np.pi)
            img += np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
    else:  # noise_texture
        img = ndimage.gaussian_filter(rng.random((hh, ww)), 2.0)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)


def _sample(base: np.ndarray, oy: float, ox: float, h: int, w: int, margin: int) -> np.ndarray:
    """Bilinear crop of base at fractional offset (oy, ox)."""
    y0 = margin + oy
    x0 = margin + ox
    iy, ix = int(np.floor(y0)), int(np.floor(x0))
    fy, fx = y0 - iy, x0 - ix
    a = base[iy : iy + h, ix : ix + w]
    b = base[iy : iy + h, ix + 1 : ix + w + 1]
    c = base[iy + 1 : iy + h + 1, ix : ix + w]
    d = base[iy + 1 : iy + h + 1, ix + 1 : ix + w + 1]
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)


def _quantize(frames: np.ndarray) -> np.ndarray:
    """8-bit round trip so saved clips reload bit-identically."""
    return np.round(np.clip(frames, 0.0, 1.0) * 255.0) / 255.0


def gen_pair(spec: SynthSpec, clip_seed=None) -> LabeledClip:
    """One reference/distorted pair; mos = 1 - jitter_amp/amp_max."""
    rng = np.random.default_rng(spec.seed if clip_seed is None else clip_seed)
    drift_per_frame = 0.35
    margin = int(math.ceil(drift_per_frame * spec.frames + spec.amp_max)) + 2
    base = _base_texture(spec, rng, margin)
    jitter = rng.uniform(-spec.jitter_amp, spec.jitter_amp, size=(spec.frames, 2))
    flicker = rng.uniform(-1.0, 1.0, size=spec.frames)

    ref_frames, dist_frames = [], []
    for t in range(spec.frames):
        oy = drift_per_frame * t * 0.6
        ox = drift_per_frame * t
        ref = _sample(base, oy, ox, spec.h, spec.w, margin)
        dist = _sample(base, oy + jitter[t, 0], ox + jitter[t, 1], spec.h, spec.w, margin)
        dist = dist * (1.0 + spec.flicker_amp * flicker[t])
        ref_frames.append(ref)
        dist_frames.append(dist)
    ref = _quantize(np.stack(ref_frames)[..., None])
    dist = _quantize(np.stack(dist_frames)[..., None])
    if spec.channels == 3:
        ref = np.repeat(ref, 3, axis=-1)
        dist = np.repeat(dist, 3, axis=-1)
    return LabeledClip(
        ref=VideoTensor(ref),
        dist=VideoTensor(dist),
        mos=1.0 - min(spec.jitter_amp / spec.amp_max, 1.0),
    )


def gen_dataset(spec: SynthSpec, amp_grid) -> tuple:
    """Balanced dataset: n_clips spread evenly across amp_grid.

    Returns (clips, manifest dict); clip i is fully determined by
    (spec.seed, i) so regeneration is bit-identical.
    """
    amp_grid = list(amp_grid)
    if spec.n_clips % len(amp_grid) != 0:
        raise ValueError(f"{spec.n_clips} clips not divisible by {len(amp_grid)} amplitudes")
    per_amp = spec.n_clips // len(amp_grid)
    amp_max = max(max(amp_grid), 1e-12)
    clips, entries = [], []
    i = 0
    for amp in amp_grid:
        for _ in range(per_amp):
            sub = SynthSpec(**{**spec.to_dict(), "jitter_amp": float(amp), "amp_max": amp_max})
            clip_seed = [spec.seed, i]
            clip = gen_pair(sub, clip_seed)
            clip.clip_id = f"clip{i:04d}"
            clip.content_id = f"content{i:04d}"
            clips.append(clip)
            entries.append(
                {
                    "clip_id": clip.clip_id,
                    "content_id": clip.content_id,
                    "amp": float(amp),
                    "mos": clip.mos,
                    "seed": clip_seed,
                    "pattern": spec.pattern,
                }
            )
            i += 1
    manifest = {"spec": spec.to_dict(), "amp_grid": [float(a) for a in amp_grid], "clips": entries}
    return clips, manifest


def write_dataset(clips: list, manifest: dict, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for clip in clips:
        save_raw_planar(clip.ref, out_dir / clip.clip_id / "ref")
        save_raw_planar(clip.dist, out_dir / clip.clip_id / "dist")
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_dataset(data_dir) -> tuple:
    data_dir = Path(data_dir)
    manifest = json.loads((data_dir / "manifest.json").read_text())
    clips = []
    for entry in manifest["clips"]:
        clips.append(
            LabeledClip(
                ref=load_video(data_dir / entry["clip_id"] / "ref", "raw_planar"),
                dist=load_video(data_dir / entry["clip_id"] / "dist", "raw_planar"),
                mos=entry["mos"],
                content_id=entry["content_id"],
                clip_id=entry["clip_id"],
            )
        )
    return clips, manifest
