"""Corruption ops and the adaptive augmentation probability controller."""

import numpy as np
import pytest

from voxsynth.augment import (
    AdaController,
    AugmentationOp,
    apply_augmentations,
    controller_step,
    default_augmentations,
    estimate_r_ada,
)
from voxsynth.volume import VoxelVolume


def random_patch(rng, dims=(30, 30, 30)):
    nx, ny, nz = dims
    return VoxelVolume(rng.random((nz, ny, nx)))


def one_op(kind, **params):
    return [AugmentationOp(kind, params)]


class TestGating:
    def test_zero_probability_is_bit_exact(self):
        rng = np.random.default_rng(0)
        patch = random_patch(rng)
        out = apply_augmentations(patch, default_augmentations(), 0.0, rng)
        np.testing.assert_array_equal(out.data, patch.data)
        assert out.metadata["augmentations"] == []

    def test_unit_probability_applies_all_in_order(self):
        rng = np.random.default_rng(1)
        patch = random_patch(rng)
        out = apply_augmentations(patch, default_augmentations(), 1.0, rng)
        assert out.metadata["augmentations"] == [
            "intensity_scale",
            "gaussian_noise",
            "voxel_shuffle",
            "inpaint",
            "linear_ramp",
        ]

    def test_seeded_runs_are_identical(self):
        patch = random_patch(np.random.default_rng(2))
        a = apply_augmentations(patch, default_augmentations(), 0.7, np.random.default_rng(5))
        b = apply_augmentations(patch, default_augmentations(), 0.7, np.random.default_rng(5))
        np.testing.assert_array_equal(a.data, b.data)
        assert a.metadata["augmentations"] == b.metadata["augmentations"]

    def test_intermediate_probability_applies_a_subset(self):
        rng = np.random.default_rng(3)
        patch = random_patch(rng)
        seen = set()
        for _ in range(20):
            out = apply_augmentations(patch, default_augmentations(), 0.5, rng)
            seen.add(len(out.metadata["augmentations"]))
        assert min(seen) < 5  # not everything fires every time
        assert max(seen) > 0

    def test_rejects_bad_probability(self):
        rng = np.random.default_rng(4)
        patch = random_patch(rng)
        with pytest.raises(ValueError):
            apply_augmentations(patch, default_augmentations(), -0.1, rng)
        with pytest.raises(ValueError):
            apply_augmentations(patch, default_augmentations(), 1.1, rng)


class TestOps:
    def test_intensity_scale_is_a_single_factor(self):
        rng = np.random.default_rng(5)
        patch = random_patch(rng)
        out = apply_augmentations(patch, one_op("intensity_scale", low=0.6, high=1.2), 1.0, rng)
        nonzero = patch.data > 1e-9
        factors = out.data[nonzero] / patch.data[nonzero]
        assert factors.std() < 1e-12
        assert 0.6 <= factors.mean() <= 1.2

    def test_gaussian_noise_statistics(self):
        rng = np.random.default_rng(6)
        patch = random_patch(rng, dims=(40, 40, 40))
        out = apply_augmentations(patch, one_op("gaussian_noise", sd=0.1), 1.0, rng)
        delta = out.data - patch.data
        assert abs(delta.mean()) < 0.005
        assert delta.std() == pytest.approx(0.1, rel=0.05)

    def test_voxel_shuffle_preserves_multiset_locally(self):
        rng = np.random.default_rng(7)
        patch = random_patch(rng, dims=(40, 40, 40))
        out = apply_augmentations(patch, one_op("voxel_shuffle", region=(25, 25, 25)), 1.0, rng)
        np.testing.assert_array_equal(np.sort(out.data, axis=None), np.sort(patch.data, axis=None))
        changed = out.data != patch.data
        assert changed.sum() <= 25 ** 3
        zz, yy, xx = np.nonzero(changed)
        assert np.ptp(zz) < 25 and np.ptp(yy) < 25 and np.ptp(xx) < 25

    def test_voxel_shuffle_clamps_to_small_patches(self):
        rng = np.random.default_rng(8)
        patch = random_patch(rng, dims=(10, 10, 10))
        out = apply_augmentations(patch, one_op("voxel_shuffle", region=(25, 25, 25)), 1.0, rng)
        np.testing.assert_array_equal(np.sort(out.data, axis=None), np.sort(patch.data, axis=None))

    def test_inpaint_writes_the_patch_mean(self):
        rng = np.random.default_rng(9)
        patch = random_patch(rng, dims=(30, 30, 30))
        out = apply_augmentations(patch, one_op("inpaint", region=(15, 15, 15), fill="mean"), 1.0, rng)
        changed = out.data != patch.data
        assert 0 < changed.sum() <= 15 ** 3
        assert (out.data[changed] == patch.data.mean()).all()
        zz, yy, xx = np.nonzero(changed)
        assert np.ptp(zz) < 15 and np.ptp(yy) < 15 and np.ptp(xx) < 15

    def test_inpaint_zero_fill(self):
        rng = np.random.default_rng(10)
        patch = VoxelVolume(rng.random((20, 20, 20)) + 0.5, intensity_range=(0.0, 2.0))
        out = apply_augmentations(patch, one_op("inpaint", region=(8, 8, 8), fill="zero"), 1.0, rng)
        assert (out.data == 0.0).sum() == 8 ** 3

    def test_inpaint_unknown_fill_rejected(self):
        rng = np.random.default_rng(11)
        patch = random_patch(rng)
        with pytest.raises(ValueError, match="fill"):
            apply_augmentations(patch, one_op("inpaint", fill="stripes"), 1.0, rng)

    def test_linear_ramp_scales_one_axis(self):
        rng = np.random.default_rng(12)
        patch = VoxelVolume(np.ones((20, 20, 20)))
        out = apply_augmentations(
            patch, one_op("linear_ramp", min_factor_low=0.3, min_factor_high=0.9), 1.0, rng
        ).data
        # constant on two axes, a straight line on the third
        varying = [axis for axis in range(3) if not np.allclose(np.diff(out, axis=axis), 0.0)]
        assert len(varying) == 1
        profile = np.moveaxis(out, varying[0], 0)[:, 0, 0]
        assert out.max() == pytest.approx(1.0, abs=1e-12)
        assert 0.3 <= out.min() <= 0.9
        steps = np.diff(profile)
        assert np.allclose(steps, steps[0], atol=1e-12)  # linear
        assert (steps < 0).all() or (steps > 0).all()  # monotone either way

    def test_unknown_kind_rejected_at_construction(self):
        with pytest.raises(ValueError):
            AugmentationOp("pixel_dropout")


class TestOverfitEstimate:
    def test_all_positive(self):
        assert estimate_r_ada([0.3, 2.0, 0.001]) == 1.0

    def test_balanced(self):
        assert estimate_r_ada([1.0, -1.0, 0.5, -0.5]) == 0.0

    def test_mixed_magnitudes_ignore_scale(self):
        assert estimate_r_ada([2.0, 1.0, -3.0, 0.5]) == 0.5

    def test_zero_counts_as_zero(self):
        assert estimate_r_ada([0.0, 0.0, 1.0]) == pytest.approx(1.0 / 3.0)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            estimate_r_ada([])


class TestController:
    def test_moves_toward_more_augmentation(self):
        ctrl = AdaController(p_aug=0.5)
        out = controller_step(ctrl, 1.0, epoch=0)
        assert out.p_aug == pytest.approx(0.55)

    def test_moves_toward_less_augmentation(self):
        ctrl = AdaController(p_aug=0.5)
        out = controller_step(ctrl, 0.0, epoch=0)
        assert out.p_aug == pytest.approx(0.45)

    def test_holds_at_target(self):
        ctrl = AdaController(p_aug=0.5)
        out = controller_step(ctrl, 0.6, epoch=0)
        assert out.p_aug == 0.5

    def test_clamps_to_unit_interval(self):
        high = controller_step(AdaController(p_aug=0.98), 1.0, epoch=0)
        assert high.p_aug == 1.0
        low = controller_step(AdaController(p_aug=0.02), 0.0, epoch=0)
        assert low.p_aug == 0.0

    def test_period_gates_updates(self):
        ctrl = AdaController(p_aug=0.5, period=4)
        for epoch in (1, 2, 3):
            ctrl = controller_step(ctrl, 1.0, epoch=epoch)
            assert ctrl.p_aug == 0.5
        ctrl = controller_step(ctrl, 1.0, epoch=4)
        assert ctrl.p_aug == pytest.approx(0.55)

    def test_at_most_one_update_per_epoch(self):
        ctrl = AdaController(p_aug=0.5)
        ctrl = controller_step(ctrl, 1.0, epoch=3)
        assert ctrl.p_aug == pytest.approx(0.55)
        ctrl = controller_step(ctrl, 1.0, epoch=3)
        assert ctrl.p_aug == pytest.approx(0.55)
        ctrl = controller_step(ctrl, 1.0, epoch=4)
        assert ctrl.p_aug == pytest.approx(0.60)

    def test_history_records_every_observation(self):
        ctrl = AdaController(p_aug=0.5, period=2)
        for epoch, r in ((0, 0.9), (1, 0.1), (2, 0.7)):
            ctrl = controller_step(ctrl, r, epoch=epoch)
        assert ctrl.history == ((0, 0.9), (1, 0.1), (2, 0.7))

    def test_epoch_must_not_decrease(self):
        ctrl = controller_step(AdaController(), 0.5, epoch=5)
        with pytest.raises(ValueError):
            controller_step(ctrl, 0.5, epoch=4)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            AdaController(p_aug=1.5)
        with pytest.raises(ValueError):
            AdaController(step=0.0)
        with pytest.raises(ValueError):
            AdaController(period=0)
        with pytest.raises(ValueError):
            controller_step(AdaController(), float("nan"), epoch=0)
        with pytest.raises(ValueError):
            controller_step(AdaController(), 0.5, epoch=-1)

    def test_closed_loop_settles_near_target(self):
        # toy discriminator: accuracy falls as augmentation rises, so the
        # sign estimate is 2 * (0.5 + 0.45 * (1 - p)) - 1 and the loop
        # oscillates about its fixed point instead of drifting
        ctrl = AdaController(p_aug=0.0, target=0.6, step=0.05)
        rng = np.random.default_rng(13)
        tail = []
        for epoch in range(200):
            acc = 0.5 + 0.45 * (1.0 - ctrl.p_aug)
            outputs = np.where(rng.random(2048) < acc, 1.0, -1.0)
            ctrl = controller_step(ctrl, estimate_r_ada(outputs), epoch=epoch)
            if epoch >= 100:
                tail.append(ctrl.history[-1][1])
        assert 0.5 <= float(np.mean(tail)) <= 0.7
