import numpy as np
import pytest
import torch

from uvcd.core import DegenerateInputError, Raster
from uvcd.losses import LossBreakdown, LossWeights, mcs_loss, mse_loss, total_loss

from helpers import mcs_oracle, mse_oracle


class TestMseLoss:
    def test_identical_inputs(self):
        a = Raster(np.ones((3, 3, 2)))
        assert mse_loss(a, a) == 0.0

    def test_hand_example(self):
        a = np.array([[1.0, 2.0]])
        b = np.array([[0.0, 0.0]])
        assert mse_loss(a, b) == pytest.approx(2.5)

    def test_quadratic_scaling(self):
        rng = np.random.default_rng(0)
        a, b = rng.random((4, 4, 2)), rng.random((4, 4, 2))
        assert mse_loss(3.0 * a, 3.0 * b) == pytest.approx(9.0 * mse_loss(a, b), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_symmetry_exact(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((5, 5, 3)), rng.random((5, 5, 3))
        assert mse_loss(a, b) == mse_loss(b, a)

    def test_torch_path_matches_numpy(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((3, 4, 2)), rng.random((3, 4, 2))
        t = mse_loss(torch.from_numpy(a), torch.from_numpy(b))
        assert isinstance(t, torch.Tensor)
        assert float(t) == pytest.approx(mse_loss(a, b), abs=1e-12)


class TestMcsLoss:
    def test_identical_nonzero(self):
        rng = np.random.default_rng(0)
        a = rng.random((4, 4, 3)) + 0.1
        assert mcs_loss(a, a) == pytest.approx(0.0, abs=1e-12)

    def test_antipodal(self):
        rng = np.random.default_rng(1)
        a = rng.random((4, 4, 3)) + 0.1
        assert mcs_loss(a, -a) == pytest.approx(2.0, abs=1e-12)

    def test_45_degree_example(self):
        a = np.zeros((2, 2, 2))
        b = np.zeros((2, 2, 2))
        a[:, :, 0] = 1.0
        b[:, :, :] = 1.0
        assert mcs_loss(a, b) == pytest.approx(1.0 - np.sqrt(2) / 2, abs=1e-12)

    def test_zero_positions_excluded(self):
        a = np.array([[[1.0, 0.0], [0.0, 0.0]]])  # second position zero
        b = np.array([[[1.0, 0.0], [1.0, 1.0]]])
        assert mcs_loss(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_all_zero_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            mcs_loss(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)))

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((3, 3, 4)) + 0.1, rng.random((3, 3, 4)) + 0.1
        for k in (1e-3, 0.5, 7.0, 1e4):
            assert mcs_loss(k * a, b) == pytest.approx(mcs_loss(a, b), abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((3, 3, 4)), rng.random((3, 3, 4))
        assert mcs_loss(a, b) == pytest.approx(mcs_loss(b, a), abs=1e-12)

    def test_channel_axis_torch(self):
        rng = np.random.default_rng(5)
        a = rng.random((2, 3, 4, 4))  # (B, C, H, W)
        b = rng.random((2, 3, 4, 4))
        t = mcs_loss(torch.from_numpy(a), torch.from_numpy(b), channel_axis=1)
        ref = mcs_loss(np.moveaxis(a, 1, -1).reshape(-1, 1, 3), np.moveaxis(b, 1, -1).reshape(-1, 1, 3))
        assert float(t) == pytest.approx(ref, abs=1e-12)


class TestOracleAgreement:
    def test_against_scalar_loops(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            a = rng.standard_normal((3, 3, 4))
            b = rng.standard_normal((3, 3, 4))
            assert mse_loss(a, b) == pytest.approx(mse_oracle(a, b), abs=1e-9)
            assert mcs_loss(a, b) == pytest.approx(mcs_oracle(a, b), abs=1e-9)


class TestGradients:
    def test_match_finite_differences(self):
        rng = np.random.default_rng(6)
        a0 = rng.standard_normal((2, 3, 3)) + 0.2
        b0 = rng.standard_normal((2, 3, 3)) + 0.2
        for loss in (mse_loss, mcs_loss):
            a = torch.tensor(a0, requires_grad=True)
            b = torch.tensor(b0)
            loss(a, b).backward()
            analytic = a.grad.clone()
            h = 1e-5
            fd = torch.zeros_like(analytic)
            with torch.no_grad():
                flat = a.reshape(-1)
                for i in range(flat.numel()):
                    orig = flat[i].item()
                    flat[i] = orig + h
                    up = float(loss(a, b))
                    flat[i] = orig - h
                    down = float(loss(a, b))
                    flat[i] = orig
                    fd.reshape(-1)[i] = (up - down) / (2 * h)
            rel = ((analytic - fd).abs() / analytic.abs().clamp_min(1e-3)).max()
            assert float(rel) < 1e-4


class TestWeightsAndBreakdown:
    def test_weights_validation(self):
        with pytest.raises(ValueError):
            LossWeights(recon=(-0.1, 0.0, 0.0))
        with pytest.raises(ValueError):
            LossWeights(recon=(0.0, 0.0, 0.0), align_cos=0.0, align_mse=0.0)

    def test_default_total_arithmetic(self):
        b = LossBreakdown.from_components((1.0, 1.0, 1.0), 1.0, 1.0, LossWeights())
        assert b.total == pytest.approx(2.03, abs=1e-12)

    def test_weight_masking(self):
        w = LossWeights(recon=(0.0, 0.0, 0.0), align_cos=1.0, align_mse=0.0)
        b = LossBreakdown.from_components((5.0, 5.0, 5.0), 0.7, 9.0, w)
        assert b.total == pytest.approx(0.7)

    def test_total_consistency(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            recon = tuple(rng.random(3))
            cos, mse = rng.random(), rng.random()
            w = LossWeights(tuple(rng.random(3)), rng.random(), rng.random() + 0.01)
            b = LossBreakdown.from_components(recon, cos, mse, w)
            expected = sum(wi * ri for wi, ri in zip(w.recon, recon)) + w.align_cos * cos + w.align_mse * mse
            assert b.total == pytest.approx(expected, abs=1e-9)

    def test_total_loss_identical_pairs(self):
        rng = np.random.default_rng(8)
        maps = [rng.random((4, 4, c)) + 0.1 for c in (2, 3, 4)]
        sem = rng.random((4, 4, 5)) + 0.1
        b = total_loss(
            [(m, m) for m in maps], (sem, sem), (sem, sem), LossWeights()
        )
        assert b.total == pytest.approx(0.0, abs=1e-12)

    def test_record_round_trip_keys(self):
        b = LossBreakdown.from_components((0.1, 0.2, 0.3), 0.4, 0.5, LossWeights())
        rec = b.to_record(7)
        assert rec["step"] == 7
        assert set(rec) == {"step", "recon0", "recon1", "recon2", "align_cos", "align_mse", "total"}
