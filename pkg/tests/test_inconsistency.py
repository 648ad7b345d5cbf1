import numpy as np
import pytest

from srvqa.inconsistency import (
    InconsistencyError,
    analyze,
    decouple,
    frame_inconsistency_level,
    gaussian_lowpass_mask,
    highlight,
    memory_threshold,
    temporal_inconsistency,
    video_inconsistency_level,
)
from srvqa.media import VideoTensor

from conftest import random_video, shifted_pair, smooth_texture


def _static_video(f=4, h=48, w=48, seed=0):
    img = smooth_texture(h, w, seed=seed)
    return VideoTensor(np.repeat(img[None, :, :, None], f, axis=0))


def _odd_jittered_video(f, h, w, dy, dx, seed=0):
    """Static clip whose odd frames are globally shifted by (dy, dx)."""
    still, shifted = shifted_pair(h, w, dy, dx, seed=seed)
    frames = [shifted if t % 2 else still for t in range(f)]
    return VideoTensor(np.stack(frames)[..., None])


class TestTemporalInconsistency:
    def test_null_case_exact_zero(self):
        v = _static_video()
        bundle = analyze(v, v)
        assert np.all(bundle.vi == 0.0)
        assert np.all(bundle.frame_levels == 0.0)
        assert bundle.video_level == 0.0

    def test_odd_frame_jitter(self):
        ref = _static_video(f=6, seed=11)
        dist = _odd_jittered_video(6, 48, 48, 0.0, 1.0, seed=11)
        bundle = temporal_inconsistency(ref, dist)
        interior = np.s_[8:-8, 8:-8]
        for t in range(5):
            med = np.median(bundle.vi[t][interior])
            assert abs(med - 1.0) <= 0.3, f"pair {t}: median {med}"

    def test_swap_invariance(self):
        ref = _static_video(f=4, seed=12)
        dist = _odd_jittered_video(4, 48, 48, 1.0, 0.5, seed=12)
        b1 = temporal_inconsistency(ref, dist)
        b2 = temporal_inconsistency(dist, ref)
        np.testing.assert_allclose(b1.vi, b2.vi, atol=1e-12)

    def test_misaligned(self):
        with pytest.raises(InconsistencyError):
            temporal_inconsistency(random_video(h=16, w=16), random_video(h=16, w=17))


class TestGaussianMask:
    def test_dc_is_one(self):
        mask = gaussian_lowpass_mask(32, 48, 0.05)
        assert mask.h_low[0, 0] == 1.0

    def test_value_at_cutoff(self):
        mask = gaussian_lowpass_mask(40, 40, 0.05)
        d0 = 0.05 * 40  # = 2 frequency-index units
        assert mask.cutoff == d0
        assert abs(mask.h_low[0, 2] - np.exp(-0.5)) <= 1e-12

    def test_negation_symmetry(self):
        m = gaussian_lowpass_mask(16, 20, 0.1).h_low
        np.testing.assert_allclose(m, np.roll(np.flip(m, (0, 1)), 1, (0, 1)), atol=1e-15)

    def test_high_pass_complement(self):
        mask = gaussian_lowpass_mask(8, 8, 0.2)
        np.testing.assert_allclose(mask.h_low + mask.h_high, 1.0, atol=1e-15)

    def test_cutoff_bounds(self):
        for bad in (0.0, 0.5, -0.1):
            with pytest.raises(InconsistencyError):
                gaussian_lowpass_mask(8, 8, bad)


class TestDecouple:
    def test_constant_map(self):
        mask = gaussian_lowpass_mask(16, 16, 0.05)
        coarse, fine = decouple(np.full((16, 16), 3.7), mask)
        np.testing.assert_allclose(coarse, 3.7, atol=1e-10)
        np.testing.assert_allclose(fine, 0.0, atol=1e-10)

    def test_reconstruction(self, rng):
        mask = gaussian_lowpass_mask(24, 20, 0.05)
        maps = rng.random((5, 24, 20)) * 4
        coarse, fine = decouple(maps, mask)
        assert np.abs(coarse + fine - maps).max() <= 1e-5

    def test_checkerboard_is_fine(self):
        # the alternating pattern lives at the Nyquist frequency
        ys, xs = np.mgrid[0:16, 0:16]
        checker = ((ys + xs) % 2).astype(float)
        mask = gaussian_lowpass_mask(16, 16, 0.05)
        coarse, fine = decouple(checker - checker.mean(), mask)
        assert np.linalg.norm(fine) >= np.linalg.norm(coarse)

    def test_shape_mismatch(self):
        mask = gaussian_lowpass_mask(8, 8, 0.05)
        with pytest.raises(InconsistencyError):
            decouple(np.zeros((2, 8, 9)), mask)


class TestHighlight:
    def test_zero_maps_identity(self):
        v = random_video(f=4, h=8, w=6, seed=13)
        out = highlight(v, np.zeros((3, 8, 6)))
        assert np.array_equal(out.frames, v.frames)

    def test_range_and_monotone_gain(self, rng):
        v = random_video(f=3, h=8, w=8, seed=14)
        maps = rng.random((2, 8, 8))
        out = highlight(v, maps)
        assert out.frames.min() >= 0.0 and out.frames.max() <= 1.0
        # the frame holding the global map maximum keeps its peak sample
        t, y, x = np.unravel_index(maps.argmax(), maps.shape)
        assert out.frames[t, y, x, 0] == pytest.approx(v.frames[t, y, x, 0])

    def test_constant_maps_degrade_to_zero_weight(self):
        v = random_video(f=3, h=6, w=6, seed=15)
        out = highlight(v, np.full((2, 6, 6), 0.42))
        assert np.array_equal(out.frames, v.frames)

    def test_last_frame_reuses_final_map(self):
        v = VideoTensor(np.full((3, 4, 4, 1), 0.5))
        maps = np.zeros((2, 4, 4))
        maps[1, :, :2] = 1.0
        out = highlight(v, maps)
        assert np.array_equal(out.frames[2], out.frames[1])

    def test_shape_errors(self):
        v = random_video(f=3, h=6, w=6)
        with pytest.raises(InconsistencyError):
            highlight(v, np.zeros((3, 6, 6)))  # wrong count
        with pytest.raises(InconsistencyError):
            highlight(v, np.zeros((2, 6, 7)))  # wrong dims


class TestLevels:
    def test_uniform_field_level(self):
        # constant (3, 4) difference: magnitude spread 0, all mass in one bin
        field = np.zeros((8, 8, 2))
        field[..., 0] = 3.0
        field[..., 1] = 4.0
        hist = np.zeros(16)
        hist[0] = 1.0
        expected = 0.5 * 0.0 + 0.5 * hist.std()
        assert frame_inconsistency_level(field) == pytest.approx(expected, abs=1e-12)

    def test_alpha_bounds(self):
        with pytest.raises(InconsistencyError):
            frame_inconsistency_level(np.zeros((4, 4, 2)), alpha=1.5)

    def test_video_level(self):
        levels = [1.0, 2.0, 3.0]
        assert video_inconsistency_level(levels) == pytest.approx(2.0 + np.std(levels))

    def test_video_level_empty(self):
        with pytest.raises(InconsistencyError):
            video_inconsistency_level([])


class TestMemoryThreshold:
    def test_endpoints(self):
        assert memory_threshold(0.2, 0.2, 0.9) == 5.0
        assert memory_threshold(0.9, 0.2, 0.9) == 1.0

    def test_clamping(self):
        assert memory_threshold(-10.0, 0.0, 1.0) == 5.0
        assert memory_threshold(10.0, 0.0, 1.0) == 1.0

    def test_degenerate_range(self):
        assert memory_threshold(0.5, 0.3, 0.3) == 5.0

    def test_monotone_nonincreasing(self, rng):
        values = np.sort(rng.random(50))
        thresholds = [memory_threshold(v, 0.0, 1.0) for v in values]
        assert np.all(np.diff(thresholds) <= 0)

    def test_bad_range(self):
        with pytest.raises(InconsistencyError):
            memory_threshold(0.5, 1.0, 0.0)


class TestAnalyze:
    def test_full_chain_consistency(self):
        ref = _static_video(f=4, seed=16)
        dist = _odd_jittered_video(4, 48, 48, 0.5, -0.5, seed=16)
        bundle = analyze(ref, dist)
        assert bundle.vi.shape == (3, 48, 48)
        assert np.abs(bundle.vi_coarse + bundle.vi_fine - bundle.vi).max() <= 1e-5
        assert bundle.frame_levels.shape == (3,)
        assert bundle.video_level == pytest.approx(
            video_inconsistency_level(bundle.frame_levels)
        )
