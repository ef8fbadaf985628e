"""Patch planning, blend windows, and seamless volume assembly."""

import numpy as np
import pytest

from voxsynth.conditioning import neutral_map
from voxsynth.render import Generator, IdentityGenerator
from voxsynth.tiling import (
    TilingPlan,
    concentric_weights,
    plan_tiling,
    process_volume,
    retained_region,
)
from voxsynth.volume import VoxelVolume

from oracles import tiling_coverage_count


def axis_origins(plan, axis):
    return sorted({o[axis] for o in plan.patch_origins})


class TestPlanLayout:
    def test_production_size_layout(self):
        plan = plan_tiling((512, 512, 112))
        want_xy = [0, 38, 76, 114, 152, 190, 228, 266, 304, 342, 380, 384]
        assert axis_origins(plan, 0) == want_xy
        assert axis_origins(plan, 1) == want_xy
        assert axis_origins(plan, 2) == [0, 19, 38, 48]
        assert plan.n_patches == 12 * 12 * 4
        assert plan.stride == (38, 38, 19)

    def test_medium_size_layout(self):
        plan = plan_tiling((256, 256, 96))
        assert axis_origins(plan, 0) == [0, 38, 76, 114, 128]
        assert axis_origins(plan, 2) == [0, 19, 32]
        assert plan.n_patches == 5 * 5 * 3

    def test_volume_equal_to_patch_is_one_patch(self):
        plan = plan_tiling((128, 128, 64))
        assert plan.patch_origins == ((0, 0, 0),)

    def test_last_origin_is_clamped_flush(self):
        plan = plan_tiling((200, 200, 80))
        for axis in range(3):
            last = axis_origins(plan, axis)[-1]
            assert last + plan.patch_dims[axis] == plan.volume_dims[axis]

    def test_plans_are_deterministic_values(self):
        a = plan_tiling((256, 192, 96), (64, 64, 48), (10, 10, 8), (12, 12, 6))
        b = plan_tiling((256, 192, 96), (64, 64, 48), (10, 10, 8), (12, 12, 6))
        assert a == b

    def test_rejects_small_volume_with_padding_hint(self):
        with pytest.raises(ValueError, match="pad"):
            plan_tiling((100, 512, 112))

    def test_rejects_margins_that_eat_the_patch(self):
        with pytest.raises(ValueError, match="stride"):
            plan_tiling((256, 256, 96), (64, 64, 64), (30, 30, 30), (17, 17, 17))

    def test_rejects_malformed_tuples(self):
        with pytest.raises(ValueError):
            plan_tiling((256, 256))
        with pytest.raises(ValueError):
            plan_tiling((256, 256, 96), d_overlap=(-1, 0, 0))


class TestCoverage:
    @pytest.mark.parametrize(
        "volume,patch,overlap,crop",
        [
            ((160, 160, 90), (128, 128, 64), (30, 30, 15), (30, 30, 15)),
            ((256, 256, 96), (128, 128, 64), (30, 30, 15), (30, 30, 15)),
            ((96, 80, 72), (48, 40, 36), (8, 8, 6), (10, 8, 9)),
            ((50, 50, 50), (50, 50, 50), (0, 0, 0), (0, 0, 0)),
            ((64, 64, 64), (32, 32, 32), (0, 0, 0), (0, 0, 0)),
        ],
    )
    def test_every_voxel_is_covered(self, volume, patch, overlap, crop):
        plan = plan_tiling(volume, patch, overlap, crop)
        assert tiling_coverage_count(plan).min() >= 1

    def test_interior_retained_regions_overlap_exactly(self):
        plan = plan_tiling((512, 512, 112))
        for axis in range(3):
            origins = axis_origins(plan, axis)
            stride = plan.stride[axis]
            for a, b in zip(origins, origins[1:]):
                if b - a != stride:
                    continue  # clamped final origin overlaps more
                a_hi = a + plan.patch_dims[axis] - plan.d_crop[axis]
                b_lo = b + plan.d_crop[axis]
                assert a_hi - b_lo == plan.d_overlap[axis]

    def test_border_faces_keep_their_crop_band(self):
        plan = plan_tiling((256, 256, 96))
        first = retained_region(plan, (0, 0, 0))
        assert [r[0] for r in first] == [0, 0, 0]
        last_origin = tuple(v - p for v, p in zip(plan.volume_dims, plan.patch_dims))
        last = retained_region(plan, last_origin)
        assert [r[1] for r in last] == list(plan.volume_dims)
        # an interior patch drops the crop band on both sides
        interior = (38, 38, 19)
        region = retained_region(plan, interior)
        assert region[0] == (38 + 30, 38 + 128 - 30)
        assert region[2] == (19 + 15, 19 + 64 - 15)


class TestWindow:
    def test_shape_peak_and_floor(self):
        w = concentric_weights((17, 13, 9)).weights.data
        assert w.shape == (9, 13, 17)
        assert w.max() == 1.0
        assert w.min() == 0.01
        assert w[4, 6, 8] == 1.0  # center voxel carries the peak
        assert (w > 0).all()

    @pytest.mark.parametrize("dims", [(16, 12, 8), (17, 13, 9), (5, 5, 5)])
    def test_exact_reflection_symmetry(self, dims):
        w = concentric_weights(dims).weights.data
        for axis in range(3):
            np.testing.assert_array_equal(np.flip(w, axis=axis), w)

    def test_corners_are_lowest(self):
        w = concentric_weights((11, 11, 11)).weights.data
        assert w[0, 0, 0] == w.min()
        assert w[0, 0, 0] < w[5, 5, 0] < w[5, 5, 5]

    def test_degenerate_single_voxel_axis(self):
        w = concentric_weights((1, 1, 1)).weights.data
        np.testing.assert_array_equal(w, np.ones((1, 1, 1)))

    def test_floor_epsilon_validation(self):
        with pytest.raises(ValueError):
            concentric_weights((8, 8, 8), floor_epsilon=0.0)
        with pytest.raises(ValueError):
            concentric_weights((8, 8, 8), floor_epsilon=1.0)


class ConstantPerCall(Generator):
    """Emits a different constant per apply call; exposes the call log."""

    def __init__(self, values):
        self.values = list(values)
        self.calls = 0

    def apply(self, mask_patch, conditioning_patch):
        v = self.values[self.calls % len(self.values)]
        self.calls += 1
        return VoxelVolume(np.full(mask_patch.data.shape, v), spacing=mask_patch.spacing)


class TestAssembly:
    def test_identity_round_trip(self):
        rng = np.random.default_rng(0)
        data = rng.random((48, 48, 48))
        mask = VoxelVolume(data)
        plan = plan_tiling((48, 48, 48), (32, 32, 32), (4, 4, 4), (6, 6, 6))
        out = process_volume(mask, neutral_map(mask.dims), IdentityGenerator(), plan)
        np.testing.assert_allclose(out.data, data, atol=1e-12)
        assert out.metadata["n_patches"] == plan.n_patches

    def test_constant_field_passes_through(self):
        mask = VoxelVolume(np.full((40, 40, 40), 0.37))
        plan = plan_tiling((40, 40, 40), (24, 24, 24), (4, 4, 4), (4, 4, 4))
        out = process_volume(mask, neutral_map(mask.dims), IdentityGenerator(), plan)
        np.testing.assert_allclose(out.data, 0.37, atol=1e-12)

    def test_blend_is_convex_combination(self):
        mask = VoxelVolume.zeros((40, 40, 40))
        plan = plan_tiling((40, 40, 40), (24, 24, 24), (4, 4, 4), (4, 4, 4))
        gen = ConstantPerCall([0.2, 0.8, 0.4, 0.6])
        out = process_volume(mask, neutral_map(mask.dims), gen, plan).data
        assert out.min() >= 0.2 - 1e-12
        assert out.max() <= 0.8 + 1e-12
        # a voxel covered by exactly one retained region equals that patch
        count = tiling_coverage_count(plan)
        single = count == 1
        assert single.any()
        first = retained_region(plan, plan.patch_origins[0])
        (x0, x1), (y0, y1), (z0, z1) = first
        sub = single[z0:z1, y0:y1, x0:x1]
        assert np.allclose(out[z0:z1, y0:y1, x0:x1][sub], 0.2, atol=1e-12)

    def test_generator_shape_mismatch_names_origin(self):
        class Wrong(Generator):
            def apply(self, mask_patch, conditioning_patch):
                return VoxelVolume.zeros((4, 4, 4))

        mask = VoxelVolume.zeros((40, 40, 40))
        plan = plan_tiling((40, 40, 40), (24, 24, 24), (4, 4, 4), (4, 4, 4))
        with pytest.raises(ValueError, match="origin"):
            process_volume(mask, neutral_map(mask.dims), Wrong(), plan)

    def test_input_dims_must_match_plan(self):
        plan = plan_tiling((40, 40, 40), (24, 24, 24), (4, 4, 4), (4, 4, 4))
        with pytest.raises(ValueError):
            process_volume(
                VoxelVolume.zeros((39, 40, 40)), neutral_map((39, 40, 40)), IdentityGenerator(), plan
            )
        with pytest.raises(ValueError):
            process_volume(
                VoxelVolume.zeros((40, 40, 40)), neutral_map((39, 40, 40)), IdentityGenerator(), plan
            )

    def test_hand_built_plan_with_holes_is_refused(self):
        plan = TilingPlan(
            volume_dims=(16, 16, 16),
            patch_dims=(8, 8, 8),
            d_overlap=(0, 0, 0),
            d_crop=(0, 0, 0),
            patch_origins=((0, 0, 0),),
        )
        with pytest.raises(RuntimeError, match="uncovered"):
            process_volume(
                VoxelVolume.zeros((16, 16, 16)), neutral_map((16, 16, 16)), IdentityGenerator(), plan
            )
