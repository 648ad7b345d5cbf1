"""End-to-end quality model: highlighted videos in, fused score out.

Preprocessing (flow, inconsistency maps, highlighting) is deterministic
and cacheable; the learned part runs the two spatial extractors, the
capacity-guided stage-one temporal model, the informative filter, and the
stage-two temporal model, then mixes the two scores.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from srvqa import igtm, ihsm, inconsistency
from srvqa.flow import FarnebackParams
from srvqa.media import VideoTensor, resize_bilinear
from srvqa.nn import ParamStore
from srvqa.nn import tensor as T


@dataclass
class ModelConfig:
    coarse: ihsm.CoarseConfig = field(default_factory=ihsm.CoarseConfig)
    fine: ihsm.FineConfig = field(default_factory=ihsm.FineConfig)
    temporal: igtm.TemporalConfig = field(default_factory=igtm.TemporalConfig)
    alpha: float = inconsistency.DEFAULT_ALPHA
    bins: int = inconsistency.DEFAULT_BINS
    cutoff_frac: float = inconsistency.DEFAULT_CUTOFF_FRAC
    tau: float = inconsistency.DEFAULT_TAU
    eta: float = inconsistency.DEFAULT_ETA
    gamma: float = 0.5
    fixed_segments: int | None = None  # ablation: fixed-length segments
    use_guidance: bool = True  # ablation: raw inputs + fixed segments when off

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["coarse"] = ihsm.CoarseConfig(
            **{**d.get("coarse", {}), "dwsa": ihsm.DwSaConfig(**d.get("coarse", {}).get("dwsa", {}))}
        )
        d["fine"] = ihsm.FineConfig(**{**d.get("fine", {}), "channels": tuple(d.get("fine", {}).get("channels", (16, 32, 64)))})
        d["temporal"] = igtm.TemporalConfig(**d.get("temporal", {}))
        return cls(**d)


@dataclass
class PreprocessedClip:
    coarse_frames: np.ndarray  # (F, S, S, C) highlighted coarse band, resized
    fine_frames: np.ndarray  # (F, H, W, C) highlighted fine band
    frame_levels: np.ndarray  # (F-1,)
    video_level: float


def preprocess_clip(
    ref: VideoTensor,
    dist: VideoTensor,
    cfg: ModelConfig,
    flow_params: FarnebackParams | None = None,
) -> PreprocessedClip:
    """Run the deterministic guidance chain for one clip."""
    bundle = inconsistency.analyze(
        ref, dist, params=flow_params, cutoff_frac=cfg.cutoff_frac, alpha=cfg.alpha, bins=cfg.bins
    )
    if cfg.use_guidance:
        coarse_video = inconsistency.highlight(dist, bundle.vi_coarse)
        fine_video = inconsistency.highlight(dist, bundle.vi_fine)
    else:
        coarse_video = dist
        fine_video = dist
    size = cfg.coarse.input_size
    coarse_video = resize_bilinear(coarse_video, size, size)
    return PreprocessedClip(
        coarse_frames=coarse_video.frames,
        fine_frames=fine_video.frames,
        frame_levels=bundle.frame_levels,
        video_level=bundle.video_level,
    )


@dataclass
class Prediction:
    s1: float
    s2: float
    score: float
    segments: list
    threshold: float


class QualityModel:
    """Holds the parameter store plus the frozen threshold range."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        self.store = ParamStore(seed)
        self.level_min = 0.0
        self.level_max = 1.0

    def set_level_range(self, levels) -> None:
        levels = np.asarray(list(levels), dtype=np.float64)
        self.level_min = float(levels.min())
        self.level_max = float(levels.max())

    def threshold_for(self, video_level: float) -> float:
        return inconsistency.memory_threshold(
            video_level, self.level_min, self.level_max, self.cfg.tau, self.cfg.eta
        )

    def forward(self, pre: PreprocessedClip):
        """Returns (s1, s2, score) Tensors plus the segment ranges."""
        cfg = self.cfg
        coarse_feats = ihsm.coarse_extractor(pre.coarse_frames, self.store, cfg.coarse)
        fine_feats = ihsm.fine_extractor(pre.fine_frames, self.store, cfg.fine)
        fused = ihsm.fuse_spatial(coarse_feats, fine_feats)
        num_frames = pre.coarse_frames.shape[0]
        threshold = self.threshold_for(pre.video_level)
        if cfg.use_guidance and cfg.fixed_segments is None:
            levels = igtm.extend_frame_levels(pre.frame_levels, num_frames)
            ranges = igtm.segment_ranges(levels, threshold)
        else:
            size = cfg.fixed_segments or 16
            ranges = igtm.fixed_ranges(num_frames, size)
        aggregated = igtm.aggregate_segments(fused.features, ranges)

        d_in = 2 * fused.features.shape[1]
        hidden, s1 = igtm.temporal_model(aggregated, self.store, "stage1", d_in, cfg.temporal)
        filtered, _ = igtm.informative_filter(
            hidden, self.store, "filter", cfg.temporal.topk_ratio
        )
        _, s2 = igtm.temporal_model(filtered, self.store, "stage2", cfg.temporal.d_hidden, cfg.temporal)
        score = igtm.fuse_scores(s1, s2, cfg.gamma)
        return s1, s2, score, ranges, threshold

    def predict(self, pre: PreprocessedClip) -> Prediction:
        s1, s2, score, ranges, threshold = self.forward(pre)
        return Prediction(
            s1=float(s1.data),
            s2=float(s2.data),
            score=float(score.data),
            segments=[list(r) for r in ranges],
            threshold=float(threshold),
        )

    # -- persistence -------------------------------------------------------
    def save(self, directory) -> None:
        directory = Path(directory)
        self.store.save(directory)
        meta = {
            "config": self.cfg.to_dict(),
            "level_min": self.level_min,
            "level_max": self.level_max,
        }
        (directory / "model.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, directory) -> "QualityModel":
        directory = Path(directory)
        meta = json.loads((directory / "model.json").read_text())
        model = cls(ModelConfig.from_dict(meta["config"]))
        model.store.load(directory)
        model.level_min = meta["level_min"]
        model.level_max = meta["level_max"]
        return model
