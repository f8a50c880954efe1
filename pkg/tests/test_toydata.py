import numpy as np

from uvcd.core import read_image_png, read_mask_png
from uvcd.toydata import (
    build_synthetic_dataset,
    make_scene_pair,
    make_training_patches,
)


class TestScenePairs:
    def test_shapes_and_gt_marks_target_changes_only(self):
        rng = np.random.default_rng(0)
        a, b, gt = make_scene_pair(rng, size=128, target_side=(24, 48), other_side=(12, 32))
        assert a.shape == (128, 128, 3)
        assert b.shape == (128, 128, 3)
        assert gt.shape == (128, 128)
        # something changed, but not everything
        assert 0 < gt.area() < 128 * 128

    def test_gt_region_actually_differs_between_epochs(self):
        rng = np.random.default_rng(1)
        a, b, gt = make_scene_pair(
            rng, size=128, sensor_noise=0.0, illumination=0.0,
            target_side=(24, 48), other_side=(12, 32),
        )
        diff = np.abs(a.values - b.values).max(axis=2)
        changed = gt.values.astype(bool)
        assert diff[changed].mean() > 5 * diff[~changed].mean()

    def test_deterministic_given_rng_state(self):
        for _ in range(2):
            a1, b1, g1 = make_scene_pair(np.random.default_rng(7), size=96)
            a2, b2, g2 = make_scene_pair(np.random.default_rng(7), size=96)
            np.testing.assert_array_equal(a1.values, a2.values)
            np.testing.assert_array_equal(b1.values, b2.values)
            np.testing.assert_array_equal(g1.values, g2.values)


class TestTrainingPatches:
    def test_count_shape_and_range(self):
        rng = np.random.default_rng(2)
        patches = make_training_patches(rng, 3, size=96)
        assert len(patches) == 3
        for p in patches:
            assert p.shape == (96, 96, 3)
            assert 0.0 <= p.values.min() and p.values.max() <= 1.0


class TestDatasetWriter:
    def test_writes_matching_triples(self, tmp_path):
        names = build_synthetic_dataset(tmp_path, n_pairs=3, seed=5, size=96)
        assert names == ["pair_000.png", "pair_001.png", "pair_002.png"]
        for name in names:
            a = read_image_png(tmp_path / "A" / name)
            b = read_image_png(tmp_path / "B" / name)
            gt = read_mask_png(tmp_path / "label" / name)
            assert a.shape == b.shape == (96, 96, 3)
            assert gt.shape == (96, 96)
