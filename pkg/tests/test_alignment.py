import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from uvcd.alignment import (
    AlignmentConfig,
    AlignmentModel,
    load_checkpoint,
    save_checkpoint,
)
from uvcd.core import Raster
from uvcd.encoders import MultiScaleFeatures
from uvcd.losses import LossWeights

from helpers import finite_difference_check, nudge_to_generic_point, rasters_to_tensors

TINY = AlignmentConfig(strides=(4, 8, 16), channels=(8, 16, 32), d_sem=16, adapter_hidden=16)


def random_features(seed, config: AlignmentConfig, base: int = 16):
    rng = np.random.default_rng(seed)
    levels = []
    size = base
    for c in config.channels:
        levels.append(Raster(rng.standard_normal((size, size, c)).astype(np.float32)))
        size //= 2
    return MultiScaleFeatures(tuple(levels), config.strides)


class TestConfig:
    def test_requires_octave_strides(self):
        with pytest.raises(ValueError, match="octave"):
            AlignmentConfig(strides=(4, 8, 24), channels=(1, 1, 1))

    def test_requires_two_levels(self):
        with pytest.raises(ValueError):
            AlignmentConfig(strides=(4,), channels=(8,))


class TestForward:
    def test_shape_audit(self):
        model = AlignmentModel(TINY, seed=0)
        feats = random_features(0, TINY)
        recons, sem_cos, sem_mse, fused = model.forward_rasters(feats)
        assert [r.shape for r in recons] == [(16, 16, 8), (8, 8, 16), (4, 4, 32)]
        assert sem_cos.shape == (16, 16, 16)
        assert sem_mse.shape == (16, 16, 16)
        assert fused.shape == (16, 16, 16)

    def test_purity(self):
        model = AlignmentModel(TINY, seed=0)
        feats = random_features(1, TINY)
        a = model.forward_rasters(feats)
        b = model.forward_rasters(feats)
        np.testing.assert_array_equal(a[1].values, b[1].values)
        for ra, rb in zip(a[0], b[0]):
            np.testing.assert_array_equal(ra.values, rb.values)

    def test_seeded_init_reproducible(self):
        m1 = AlignmentModel(TINY, seed=3)
        m2 = AlignmentModel(TINY, seed=3)
        for (n1, p1), (n2, p2) in zip(m1.named_parameters(), m2.named_parameters()):
            assert n1 == n2
            torch.testing.assert_close(p1, p2, rtol=0, atol=0)

    def test_adapter_weight_perturbation_moves_recon(self):
        model = AlignmentModel(TINY, seed=0)
        feats = random_features(2, TINY)
        before = model.forward_rasters(feats)[0]
        with torch.no_grad():
            model.adapters[1].pointwise.weight[0, 0, 0, 0] += 0.25
        after = model.forward_rasters(feats)[0]
        assert any(not np.array_equal(a.values, b.values) for a, b in zip(before, after))

    def test_level_count_checked(self):
        model = AlignmentModel(TINY, seed=0)
        feats = random_features(3, TINY)
        with pytest.raises(ValueError, match="strides"):
            model._to_tensors(
                MultiScaleFeatures(feats.levels[:2], (4, 8))
            )

    def test_channel_mismatch_rejected(self):
        model = AlignmentModel(TINY, seed=0)
        rng = np.random.default_rng(0)
        bad = [
            torch.from_numpy(rng.standard_normal((1, 8, 16, 16)).astype(np.float32)),
            torch.from_numpy(rng.standard_normal((1, 99, 8, 8)).astype(np.float32)),
            torch.from_numpy(rng.standard_normal((1, 32, 4, 4)).astype(np.float32)),
        ]
        with pytest.raises(ValueError, match="channels"):
            model(bad)


class TestAdapter:
    def test_zero_input_zero_output_with_and_without_skip(self):
        # biases and norm shifts initialize at zero, so zero maps to zero
        cfg_skip = AlignmentConfig(strides=(4, 8), channels=(16, 8), d_sem=16, adapter_hidden=8)
        model = AlignmentModel(cfg_skip, seed=0)
        assert model.adapters[0].use_skip  # 16 -> 16
        assert not model.adapters[1].use_skip  # 8 -> 16
        for level, c in ((0, 16), (1, 8)):
            out = model.adapter_forward(level, Raster(np.zeros((8, 8, c), dtype=np.float32)))
            np.testing.assert_array_equal(out.values, 0.0)

    def test_preserves_spatial_shape(self):
        model = AlignmentModel(TINY, seed=0)
        out = model.adapter_forward(2, Raster(np.random.default_rng(0).random((5, 9, 32), dtype=np.float32)))
        assert out.shape == (5, 9, 16)

    def test_channel_mismatch(self):
        model = AlignmentModel(TINY, seed=0)
        with pytest.raises(ValueError, match="adapter"):
            model.adapter_forward(0, Raster(np.zeros((4, 4, 5), dtype=np.float32)))


class TestFuse:
    def test_fused_shape_is_finest(self):
        model = AlignmentModel(TINY, seed=0)
        rng = np.random.default_rng(1)
        adapted = MultiScaleFeatures(
            tuple(Raster(rng.random((s, s, 16), dtype=np.float32)) for s in (16, 8, 4)),
            (4, 8, 16),
        )
        fused = model.fuse(adapted)
        assert fused.shape == (16, 16, 16)

    def test_zero_inputs_zero_fused(self):
        model = AlignmentModel(TINY, seed=0)
        adapted = MultiScaleFeatures(
            tuple(Raster(np.zeros((s, s, 16), dtype=np.float32)) for s in (16, 8, 4)),
            (4, 8, 16),
        )
        np.testing.assert_array_equal(model.fuse(adapted).values, 0.0)

    def test_inconsistent_shapes_rejected(self):
        model = AlignmentModel(TINY, seed=0)
        adapted = MultiScaleFeatures(
            tuple(Raster(np.zeros((s, s, 16), dtype=np.float32)) for s in (16, 8, 3)),
            (4, 8, 16),
        )
        with pytest.raises(ValueError, match="inconsistent"):
            model.fuse(adapted)


class TestInferenceEmbedding:
    def test_unit_norm_and_resolution(self):
        model = AlignmentModel(TINY, seed=0)
        feats = random_features(4, TINY)
        emb = model.inference_embedding(feats)
        assert emb.shape == (64, 64, 16)  # finest level 16 * stride 4
        norms = np.linalg.norm(emb.values, axis=2)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)


@given(scale=st.sampled_from([1, 2]), base=st.sampled_from([8, 16]), d_sem=st.sampled_from([4, 8]))
@settings(max_examples=8, deadline=None)
def test_shape_contract_over_geometries(scale, base, d_sem):
    strides = (scale, 2 * scale, 4 * scale)
    channels = (4, 6, 8)
    cfg = AlignmentConfig(strides=strides, channels=channels, d_sem=d_sem, adapter_hidden=4)
    model = AlignmentModel(cfg, seed=1)
    feats = random_features(0, cfg, base=base)
    recons, sem_cos, _, fused = model.forward_rasters(feats)
    assert [r.shape for r in recons] == [(base, base, 4), (base // 2, base // 2, 6), (base // 4, base // 4, 8)]
    assert sem_cos.shape == (base, base, d_sem)
    assert fused.shape == (base, base, d_sem)


class TestGradients:
    def test_small_two_level_finite_differences(self):
        cfg = AlignmentConfig(strides=(1, 2), channels=(2, 3), d_sem=4, adapter_hidden=3)
        model = nudge_to_generic_point(AlignmentModel(cfg, seed=2).double())
        rng = np.random.default_rng(5)
        levels = rasters_to_tensors(
            [rng.standard_normal((8, 8, 2)), rng.standard_normal((4, 4, 3))]
        )
        recon_targets = rasters_to_tensors(
            [rng.standard_normal((8, 8, 2)), rng.standard_normal((4, 4, 3))]
        )
        (sem_target,) = rasters_to_tensors([rng.standard_normal((8, 8, 4)) + 0.3])
        weights = LossWeights(recon=(0.01, 0.01), align_cos=1.0, align_mse=1.0)
        errors = finite_difference_check(model, levels, recon_targets, sem_target, weights)
        assert max(errors.values()) < 1e-4


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = AlignmentModel(TINY, seed=4)
        feats = random_features(6, TINY)
        before = model.forward_rasters(feats)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, step=123)
        loaded, manifest = load_checkpoint(path)
        assert manifest["step"] == 123
        assert manifest["config"]["d_sem"] == 16
        after = loaded.forward_rasters(feats)
        np.testing.assert_array_equal(before[1].values, after[1].values)
        for ra, rb in zip(before[0], after[0]):
            np.testing.assert_array_equal(ra.values, rb.values)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(ValueError, match="checkpoint"):
            load_checkpoint(path)

    def test_lightweight_contract_default_geometry(self):
        from uvcd.encoders import EncoderBundle, make_toy_encoders

        spatial, semantic, text = make_toy_encoders(7)
        bundle = EncoderBundle(spatial, semantic, text)
        model = AlignmentModel(AlignmentConfig(), seed=0)
        assert model.parameter_count() < 0.05 * bundle.parameter_count()
