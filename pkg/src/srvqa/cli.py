"""Command-line interface exposing the full pipeline.

Exit codes: 0 success, 2 invalid arguments or config, 3 I/O failure,
4 numeric failure (non-finite values).
"""
from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

import click
import jsonschema
import numpy as np

from srvqa import igtm, inconsistency, metrics, synthdata, traineval
from srvqa.flow import FarnebackParams
from srvqa.media import MediaError, load_video, save_map, save_raw_planar
from srvqa.model import ModelConfig, QualityModel, preprocess_clip

EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _schema(name: str) -> dict:
    text = resources.files("srvqa.schemas").joinpath(name).read_text()
    return json.loads(text)


def _validate(payload: dict, schema_name: str) -> None:
    try:
        jsonschema.validate(payload, _schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise click.exceptions.UsageError(f"{schema_name}: {exc.message}")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        _fail_io(str(exc))
    except json.JSONDecodeError as exc:
        raise click.exceptions.UsageError(f"{path}: {exc}")


def _fail_io(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_IO)


def _fail_numeric(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_NUMERIC)


def _load_clip(path: str, fmt: str):
    p = Path(path)
    if not p.exists():
        _fail_io(f"no such path: {p}")
    if fmt == "auto":
        if p.suffix == ".y4m":
            fmt = "y4m"
        elif (p / "header.json").exists():
            fmt = "raw_planar"
        else:
            fmt = "png_seq"
    try:
        return load_video(p, fmt)
    except FileNotFoundError as exc:
        _fail_io(str(exc))
    except (MediaError, ValueError) as exc:
        raise click.exceptions.UsageError(str(exc))


def _flow_params(cfg: dict) -> FarnebackParams:
    return FarnebackParams(**cfg.get("flow", {}))


def _model_config(cfg: dict) -> ModelConfig:
    return ModelConfig.from_dict(cfg.get("model", {}))


def _emit(payload: dict, out):
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        click.echo(text)


@click.group()
def main():
    """Full-reference quality assessment for super-resolved video."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth(spec_path, out_dir):
    """Generate a synthetic labeled dataset and its manifest."""
    payload = _read_json(spec_path)
    _validate(payload, "synth_spec.schema.json")
    amp_grid = payload.pop("amp_grid", [0.0, 2.0, 3.0, 4.0, 5.0])
    try:
        spec = synthdata.SynthSpec(**payload)
        clips, manifest = synthdata.gen_dataset(spec, amp_grid)
    except ValueError as exc:
        raise click.exceptions.UsageError(str(exc))
    try:
        synthdata.write_dataset(clips, manifest, out_dir)
    except OSError as exc:
        _fail_io(str(exc))
    click.echo(f"wrote {len(clips)} clips to {out_dir}", err=True)


def _common_clip_options(f):
    f = click.option("--ref", "ref_path", required=True, type=click.Path())(f)
    f = click.option("--dist", "dist_path", required=True, type=click.Path())(f)
    f = click.option(
        "--format", "fmt", default="auto", type=click.Choice(["auto", "png_seq", "raw_planar", "y4m"])
    )(f)
    return f


@main.command("inconsistency")
@_common_clip_options
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--cutoff", default=inconsistency.DEFAULT_CUTOFF_FRAC, show_default=True)
def inconsistency_cmd(ref_path, dist_path, fmt, out_dir, cutoff):
    """Temporal-inconsistency maps (full/coarse/fine) plus level JSON."""
    ref = _load_clip(ref_path, fmt)
    dist = _load_clip(dist_path, fmt)
    try:
        bundle = inconsistency.analyze(ref, dist, cutoff_frac=cutoff)
    except ValueError as exc:
        raise click.exceptions.UsageError(str(exc))
    if not np.all(np.isfinite(bundle.frame_levels)):
        _fail_numeric("non-finite inconsistency levels")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for t in range(bundle.vi.shape[0]):
            save_map(bundle.vi[t], out / f"vi_{t:04d}.pgm", "pgm16")
            save_map(bundle.vi_coarse[t], out / f"vi_coarse_{t:04d}.pgm", "pgm16")
            save_map(bundle.vi_fine[t], out / f"vi_fine_{t:04d}.pgm", "pgm16")
        levels = {
            "frame_levels": [float(x) for x in bundle.frame_levels],
            "video_level": float(bundle.video_level),
        }
        (out / "levels.json").write_text(json.dumps(levels, indent=2))
    except OSError as exc:
        _fail_io(str(exc))
    click.echo(json.dumps(levels))


@main.command()
@_common_clip_options
@click.option("--grain", required=True, type=click.Choice(["coarse", "fine"]))
@click.option("--out", "out_dir", required=True, type=click.Path())
def highlight(ref_path, dist_path, fmt, grain, out_dir):
    """Write the inconsistency-highlighted distorted clip (raw_planar)."""
    ref = _load_clip(ref_path, fmt)
    dist = _load_clip(dist_path, fmt)
    try:
        bundle = inconsistency.analyze(ref, dist)
        maps = bundle.vi_coarse if grain == "coarse" else bundle.vi_fine
        boosted = inconsistency.highlight(dist, maps)
    except ValueError as exc:
        raise click.exceptions.UsageError(str(exc))
    if not np.all(np.isfinite(boosted.frames)):
        _fail_numeric("non-finite highlighted samples")
    try:
        save_raw_planar(boosted, out_dir)
    except OSError as exc:
        _fail_io(str(exc))
    click.echo(f"wrote highlighted clip to {out_dir}", err=True)


@main.command()
@_common_clip_options
@click.option("--stats", "stats_path", required=True, type=click.Path(exists=True))
@click.option("--fixed-segments", type=int, default=None, help="ablation: fixed-length segments")
@click.option("--out", "out_path", type=click.Path(), default=None)
def segment(ref_path, dist_path, fmt, stats_path, fixed_segments, out_path):
    """Adaptive capacity segmentation for one clip.

    The stats JSON freezes the level range used by the adaptive threshold
    (level_min/level_max from the training split, plus optional tau/eta).
    """
    stats = _read_json(stats_path)
    ref = _load_clip(ref_path, fmt)
    dist = _load_clip(dist_path, fmt)
    try:
        bundle = inconsistency.analyze(ref, dist)
        num_frames = ref.frames.shape[0]
        if fixed_segments is not None:
            threshold = None
            ranges = igtm.fixed_ranges(num_frames, fixed_segments)
        else:
            threshold = inconsistency.memory_threshold(
                bundle.video_level,
                stats["level_min"],
                stats["level_max"],
                stats.get("tau", inconsistency.DEFAULT_TAU),
                stats.get("eta", inconsistency.DEFAULT_ETA),
            )
            levels = igtm.extend_frame_levels(bundle.frame_levels, num_frames)
            ranges = igtm.segment_ranges(levels, threshold)
    except KeyError as exc:
        raise click.exceptions.UsageError(f"stats file missing {exc}")
    except (ValueError, igtm.SegmentationError) as exc:
        raise click.exceptions.UsageError(str(exc))
    _emit(
        {
            "threshold": threshold,
            "segments": [list(r) for r in ranges],
            "video_level": float(bundle.video_level),
        },
        out_path,
    )


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "ckpt_dir", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True, help="parallel preprocessing workers")
@click.option("--cache", "cache_dir", type=click.Path(), default=None)
def train(data_dir, config_path, ckpt_dir, jobs, cache_dir):
    """Train on a synthetic dataset directory; writes checkpoint + history."""
    cfg = _read_json(config_path)
    _validate(cfg, "config.schema.json")
    try:
        clips, _ = synthdata.load_dataset(data_dir)
    except (OSError, json.JSONDecodeError) as exc:
        _fail_io(str(exc))
    model_cfg = _model_config(cfg)
    train_cfg = traineval.TrainConfig(**cfg.get("train", {}), )
    mos = np.array([c.mos for c in clips])
    split = traineval.split_dataset(clips, seed=cfg.get("split_seed", 0))
    pres = traineval.preprocess_dataset(
        clips, model_cfg, _flow_params(cfg), cache_dir=cache_dir, jobs=jobs
    )
    model = QualityModel(model_cfg, seed=cfg.get("seed", 0))
    try:
        history = traineval.train(
            model,
            [pres[i] for i in split.train],
            mos[split.train],
            train_cfg,
            [pres[i] for i in split.val],
            mos[split.val],
        )
    except traineval.NumericError as exc:
        _fail_numeric(str(exc))
    try:
        out = Path(ckpt_dir)
        model.save(out)
        (out / "history.json").write_text(json.dumps(history.to_dict(), indent=2))
        (out / "split.json").write_text(json.dumps(split.as_dict(), indent=2))
    except OSError as exc:
        _fail_io(str(exc))
    click.echo(json.dumps({"best_epoch": history.best_epoch, "best_val_srcc": history.best_val_srcc}))


def _load_model(ckpt_dir) -> QualityModel:
    try:
        return QualityModel.load(ckpt_dir)
    except FileNotFoundError as exc:
        _fail_io(str(exc))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise click.exceptions.UsageError(f"bad checkpoint: {exc}")


@main.command()
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@_common_clip_options
@click.option("--out", "out_path", type=click.Path(), default=None)
def predict(ckpt_dir, ref_path, dist_path, fmt, out_path):
    """Predict the quality score for one reference/distorted pair."""
    model = _load_model(ckpt_dir)
    ref = _load_clip(ref_path, fmt)
    dist = _load_clip(dist_path, fmt)
    try:
        pre = preprocess_clip(ref, dist, model.cfg)
        record = model.predict(pre)
    except ValueError as exc:
        raise click.exceptions.UsageError(str(exc))
    payload = {
        "s1": record.s1,
        "s2": record.s2,
        "score": record.score,
        "segments": record.segments,
        "threshold": record.threshold,
    }
    if not all(np.isfinite(v) for v in (record.s1, record.s2, record.score)):
        _fail_numeric("non-finite prediction")
    _validate(payload, "prediction.schema.json")
    _emit(payload, out_path)


@main.command()
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--split", "split_name", default="test", type=click.Choice(["train", "val", "test", "all"]))
@click.option("--split-seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def evaluate(ckpt_dir, data_dir, split_name, split_seed, jobs, out_path):
    """Correlation report for a trained checkpoint on a dataset split."""
    model = _load_model(ckpt_dir)
    try:
        clips, _ = synthdata.load_dataset(data_dir)
    except (OSError, json.JSONDecodeError) as exc:
        _fail_io(str(exc))
    mos = np.array([c.mos for c in clips])
    if split_name == "all":
        idx = list(range(len(clips)))
    else:
        split_file = Path(ckpt_dir) / "split.json"
        if split_file.exists():
            idx = json.loads(split_file.read_text())[split_name]
        else:
            idx = getattr(traineval.split_dataset(clips, seed=split_seed), split_name)
    pres = traineval.preprocess_dataset([clips[i] for i in idx], model.cfg, jobs=jobs)
    try:
        report, preds = traineval.evaluate(model, pres, mos[idx])
    except traineval.TrainError as exc:
        raise click.exceptions.UsageError(str(exc))
    if not np.all(np.isfinite(preds)):
        _fail_numeric("non-finite predictions")
    payload = {**report.to_dict(), "split": split_name}
    _validate(payload, "report.schema.json")
    _emit(payload, out_path)


if __name__ == "__main__":
    main()
