"""Dataset splitting, the training loop, and evaluation."""
from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from srvqa import metrics
from srvqa.flow import FarnebackParams
from srvqa.losses import DEFAULT_TEMPERATURE, loss_mse_srcc
from srvqa.media import VideoTensor
from srvqa.model import ModelConfig, PreprocessedClip, QualityModel, preprocess_clip
from srvqa.nn import tensor as T
from srvqa.nn.optim import scheduled_lr


class TrainError(RuntimeError):
    pass


class NumericError(FloatingPointError):
    """Raised when the loss or parameters become non-finite."""


@dataclass
class LabeledClip:
    ref: VideoTensor
    dist: VideoTensor
    mos: float
    content_id: str = ""
    clip_id: str = ""

    def __post_init__(self):
        if self.ref.frames.shape != self.dist.frames.shape:
            raise ValueError("reference/distorted dimensions differ")
        if not 0.0 <= self.mos <= 1.0:
            raise ValueError(f"mos {self.mos} outside [0, 1]")


@dataclass
class Split:
    train: list
    val: list
    test: list

    def as_dict(self) -> dict:
        return {"train": self.train, "val": self.val, "test": self.test}


def split_dataset(clips: list, seed: int = 0, fractions=(0.7, 0.1, 0.2)) -> Split:
    """Content-level 70/10/20 split: clips sharing a content id travel
    together. Returns index lists into `clips`."""
    n = len(clips)
    if n < 10:
        raise TrainError(f"need at least 10 clips to split, got {n}")
    groups: dict = {}
    for i, clip in enumerate(clips):
        key = clip.content_id or f"#{i}"
        groups.setdefault(key, []).append(i)
    keys = sorted(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(keys)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    train, val, test = [], [], []
    for key in keys:
        members = groups[key]
        if len(train) < n_train:
            train.extend(members)
        elif len(val) < n_val:
            val.extend(members)
        else:
            test.extend(members)
    return Split(sorted(train), sorted(val), sorted(test))


def preprocess_dataset(
    clips: list,
    cfg: ModelConfig,
    flow_params: FarnebackParams | None = None,
    cache_dir=None,
    jobs: int = 1,
) -> list:
    """Preprocess every clip; order matches input. Optional npz disk cache
    keyed by clip id; optional thread parallelism with index merge."""
    cache_dir = Path(cache_dir) if cache_dir else None
    if cache_dir:
        cache_dir.mkdir(parents=True, exist_ok=True)

    def one(idx_clip):
        idx, clip = idx_clip
        path = None
        if cache_dir and clip.clip_id:
            path = cache_dir / f"{clip.clip_id}.npz"
            if path.exists():
                z = np.load(path)
                return idx, PreprocessedClip(
                    z["coarse"], z["fine"], z["levels"], float(z["video_level"])
                )
        pre = preprocess_clip(clip.ref, clip.dist, cfg, flow_params)
        if path:
            np.savez(
                path,
                coarse=pre.coarse_frames,
                fine=pre.fine_frames,
                levels=pre.frame_levels,
                video_level=pre.video_level,
            )
        return idx, pre

    items = list(enumerate(clips))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(it) for it in items]
    results.sort(key=lambda r: r[0])
    return [pre for _, pre in results]


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3  # desk-scale default; 1e-5 suits pretrained backbones
    decay: float = 0.8
    decay_every: int = 10
    seed: int = 0
    temperature: float = DEFAULT_TEMPERATURE
    mse_only: bool = False
    use_l1: bool = False
    jobs: int = 1

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class History:
    epochs: list = field(default_factory=list)  # per-epoch dict records
    best_epoch: int = -1
    best_val_srcc: float = -2.0

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_srcc": self.best_val_srcc,
        }


def _forward_scores(model: QualityModel, pres: list):
    scores = [model.forward(p)[2] for p in pres]
    return T.reshape(T.stack(scores), (len(scores),))


def _val_pass(model: QualityModel, pres, targets, cfg: TrainConfig):
    batch = _forward_scores(model, pres)
    loss = loss_mse_srcc(
        batch, targets, cfg.temperature, mse_only=cfg.mse_only, use_l1=cfg.use_l1
    )
    val_srcc = metrics.srcc(batch.data, targets) if len(pres) >= 2 else 0.0
    return float(loss.data), val_srcc


def train(
    model: QualityModel,
    train_pres: list,
    train_mos,
    cfg: TrainConfig,
    val_pres: list | None = None,
    val_mos=None,
) -> History:
    """Mini-batch Adam with step-decayed learning rate; keeps the
    best-validation parameters in the model on return."""
    if not train_pres:
        raise TrainError("empty training set")
    train_mos = np.asarray(train_mos, dtype=np.float64)
    model.set_level_range([p.video_level for p in train_pres])

    rng = np.random.default_rng(cfg.seed)
    history = History()
    best_params = None
    n = len(train_pres)
    for epoch in range(cfg.epochs):
        lr = scheduled_lr(cfg.lr, epoch, cfg.decay, cfg.decay_every)
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = _forward_scores(model, [train_pres[i] for i in idx])
            loss = loss_mse_srcc(
                batch,
                train_mos[idx],
                cfg.temperature,
                mse_only=cfg.mse_only,
                use_l1=cfg.use_l1,
            )
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            model.store.zero_grad()
            loss.backward()
            model.store.adam_step(lr)
            epoch_loss += float(loss.data)
            batches += 1
        record = {"epoch": epoch, "lr": lr, "train_loss": epoch_loss / batches}
        if val_pres:
            val_loss, val_srcc = _val_pass(
                model, val_pres, np.asarray(val_mos, dtype=np.float64), cfg
            )
            if not np.isfinite(val_loss):
                raise NumericError(f"non-finite validation loss at epoch {epoch}")
            record.update({"val_loss": val_loss, "val_srcc": val_srcc})
            if val_srcc > history.best_val_srcc:
                history.best_val_srcc = val_srcc
                history.best_epoch = epoch
                best_params = {
                    k: v.data.copy() for k, v in model.store.params.items()
                }
        history.epochs.append(record)
    if best_params is not None:
        for k, v in best_params.items():
            model.store.params[k].data = v
    return history


def evaluate(model: QualityModel, pres: list, mos, logistic: bool = False):
    """Full inference per clip, correlation report against MOS."""
    if not pres:
        raise TrainError("empty evaluation set")
    mos = np.asarray(mos, dtype=np.float64)
    preds = np.array([model.predict(p).score for p in pres])
    report = metrics.evaluate_pairs(preds, mos)
    if logistic:
        report.plcc = metrics.plcc(preds, mos, logistic=True)
    return report, preds
