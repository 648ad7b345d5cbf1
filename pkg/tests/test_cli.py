import json

import numpy as np
import pytest
from click.testing import CliRunner

from srvqa.cli import main
from srvqa.media import load_video
from srvqa.model import QualityModel

runner = CliRunner()


def _run(args, expect=0):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == expect, result.output
    return result


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = {"n_clips": 10, "frames": 8, "h": 24, "w": 24, "seed": 0, "amp_grid": [0.0, 3.0]}
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out = root / "data"
    _run(["synth", "--spec", str(spec_path), "--out", str(out)])
    return out


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    cfg = {
        "model": {
            "coarse": {"input_size": 16, "in_channels": 1, "patch": 2, "embed": 8, "stages": 2, "window": 4, "heads": 2},
            "fine": {"in_channels": 1, "channels": [4, 8]},
            "temporal": {"d_graph": 8, "d_hidden": 8},
        },
        "train": {"epochs": 2, "batch_size": 4, "seed": 0},
        "seed": 0,
    }
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def ckpt_dir(tmp_path_factory, data_dir, config_path):
    out = tmp_path_factory.mktemp("ckpt") / "model"
    result = _run(["train", "--data", str(data_dir), "--config", str(config_path), "--out", str(out)])
    summary = json.loads(result.output.strip().splitlines()[-1])
    assert "best_epoch" in summary
    return out


class TestSynth:
    def test_layout(self, data_dir):
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert len(manifest["clips"]) == 10
        assert (data_dir / "clip0000" / "ref" / "header.json").exists()

    def test_bad_spec_exits_2(self, tmp_path):
        bad = tmp_path / "spec.json"
        bad.write_text(json.dumps({"pattern": "plasma"}))
        _run(["synth", "--spec", str(bad), "--out", str(tmp_path / "d")], expect=2)

    def test_indivisible_grid_exits_2(self, tmp_path):
        bad = tmp_path / "spec.json"
        bad.write_text(json.dumps({"n_clips": 5, "amp_grid": [0.0, 1.0]}))
        _run(["synth", "--spec", str(bad), "--out", str(tmp_path / "d")], expect=2)


class TestInconsistency:
    def test_identical_clips_zero_levels(self, data_dir, tmp_path):
        ref = data_dir / "clip0000" / "ref"
        result = _run(["inconsistency", "--ref", str(ref), "--dist", str(ref), "--out", str(tmp_path)])
        levels = json.loads(result.output.strip().splitlines()[-1])
        assert levels["video_level"] == 0.0
        assert all(x == 0.0 for x in levels["frame_levels"])
        assert (tmp_path / "vi_0000.pgm").exists()
        assert (tmp_path / "vi_fine_0006.pgm").exists()
        assert json.loads((tmp_path / "levels.json").read_text()) == levels

    def test_jittered_clip_positive_level(self, data_dir, tmp_path):
        clip = data_dir / "clip0009"  # largest amplitude
        result = _run(
            ["inconsistency", "--ref", str(clip / "ref"), "--dist", str(clip / "dist"), "--out", str(tmp_path)]
        )
        levels = json.loads(result.output.strip().splitlines()[-1])
        assert levels["video_level"] > 0.0

    def test_missing_clip_exits_3(self, tmp_path):
        _run(["inconsistency", "--ref", "/nonexistent", "--dist", "/nonexistent", "--out", str(tmp_path)], expect=3)

    def test_bad_cutoff_exits_2(self, data_dir, tmp_path):
        ref = data_dir / "clip0000" / "ref"
        _run(["inconsistency", "--ref", str(ref), "--dist", str(ref), "--out", str(tmp_path), "--cutoff", "0.9"], expect=2)


class TestHighlight:
    def test_output_loadable_same_shape(self, data_dir, tmp_path):
        clip = data_dir / "clip0008"
        out = tmp_path / "boosted"
        _run(["highlight", "--ref", str(clip / "ref"), "--dist", str(clip / "dist"), "--grain", "coarse", "--out", str(out)])
        boosted = load_video(out, "raw_planar")
        original = load_video(clip / "dist", "raw_planar")
        assert boosted.frames.shape == original.frames.shape

    def test_grain_required(self, data_dir, tmp_path):
        clip = data_dir / "clip0000"
        _run(["highlight", "--ref", str(clip / "ref"), "--dist", str(clip / "dist"), "--out", str(tmp_path / "x")], expect=2)


class TestSegment:
    def test_adaptive_segments_cover_clip(self, data_dir, tmp_path):
        stats = tmp_path / "stats.json"
        stats.write_text(json.dumps({"level_min": 0.0, "level_max": 1.0}))
        clip = data_dir / "clip0009"
        result = _run(["segment", "--ref", str(clip / "ref"), "--dist", str(clip / "dist"), "--stats", str(stats)])
        payload = json.loads(result.output)
        assert payload["threshold"] is not None
        assert payload["segments"][0][0] == 0 and payload["segments"][-1][1] == 8

    def test_fixed_segments(self, data_dir, tmp_path):
        stats = tmp_path / "stats.json"
        stats.write_text(json.dumps({"level_min": 0.0, "level_max": 1.0}))
        clip = data_dir / "clip0000"
        result = _run(
            ["segment", "--ref", str(clip / "ref"), "--dist", str(clip / "dist"), "--stats", str(stats), "--fixed-segments", "4"]
        )
        payload = json.loads(result.output)
        assert payload["threshold"] is None
        assert payload["segments"] == [[0, 4], [4, 8]]

    def test_missing_stats_key_exits_2(self, data_dir, tmp_path):
        stats = tmp_path / "stats.json"
        stats.write_text(json.dumps({"level_min": 0.0}))
        clip = data_dir / "clip0000"
        _run(["segment", "--ref", str(clip / "ref"), "--dist", str(clip / "dist"), "--stats", str(stats)], expect=2)


class TestTrain:
    def test_checkpoint_layout(self, ckpt_dir):
        for name in ("manifest.json", "params.bin", "adam.bin", "model.json", "history.json", "split.json"):
            assert (ckpt_dir / name).exists(), name
        split = json.loads((ckpt_dir / "split.json").read_text())
        assert len(split["train"]) == 7 and len(split["val"]) == 1 and len(split["test"]) == 2

    def test_unknown_config_key_exits_2(self, data_dir, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"training": {}}))
        _run(["train", "--data", str(data_dir), "--config", str(cfg), "--out", str(tmp_path / "m")], expect=2)


class TestPredict:
    def test_score_is_gamma_mix(self, data_dir, ckpt_dir):
        clip = data_dir / "clip0003"
        result = _run(["predict", "--ckpt", str(ckpt_dir), "--ref", str(clip / "ref"), "--dist", str(clip / "dist")])
        payload = json.loads(result.output)
        assert payload["score"] == pytest.approx(0.5 * payload["s1"] + 0.5 * payload["s2"])
        assert 0.0 <= payload["score"] <= 1.0
        assert payload["segments"][-1][1] == 8

    def test_deterministic(self, data_dir, ckpt_dir):
        clip = data_dir / "clip0005"
        args = ["predict", "--ckpt", str(ckpt_dir), "--ref", str(clip / "ref"), "--dist", str(clip / "dist")]
        assert _run(args).output == _run(args).output

    def test_missing_clip_exits_3(self, ckpt_dir):
        _run(["predict", "--ckpt", str(ckpt_dir), "--ref", "/no/such", "--dist", "/no/such"], expect=3)

    def test_nan_checkpoint_exits_4(self, data_dir, ckpt_dir, tmp_path):
        model = QualityModel.load(ckpt_dir)
        next(iter(model.store.params.values())).data[...] = np.nan
        broken = tmp_path / "broken"
        model.save(broken)
        clip = data_dir / "clip0000"
        _run(["predict", "--ckpt", str(broken), "--ref", str(clip / "ref"), "--dist", str(clip / "dist")], expect=4)


class TestEvaluate:
    def test_report_fields(self, data_dir, ckpt_dir):
        result = _run(["evaluate", "--ckpt", str(ckpt_dir), "--data", str(data_dir), "--split", "test"])
        payload = json.loads(result.output)
        assert {"srcc", "plcc", "krcc", "rmse", "n", "degenerate", "split"} <= set(payload)
        assert payload["n"] == 2 and payload["split"] == "test"

    def test_all_split(self, data_dir, ckpt_dir):
        result = _run(["evaluate", "--ckpt", str(ckpt_dir), "--data", str(data_dir), "--split", "all"])
        assert json.loads(result.output)["n"] == 10

    def test_bad_split_name_exits_2(self, data_dir, ckpt_dir):
        _run(["evaluate", "--ckpt", str(ckpt_dir), "--data", str(data_dir), "--split", "holdout"], expect=2)
