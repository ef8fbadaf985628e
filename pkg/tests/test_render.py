"""Classical renderer and the generator contract."""

import numpy as np
import pytest

from voxsynth.conditioning import neutral_map, positional_map
from voxsynth.render import (
    ClassicalRenderer,
    Generator,
    IdentityGenerator,
    RenderParams,
    identity_check,
    render_patch,
)
from voxsynth.volume import VoxelVolume

from oracles import dense_gaussian_blur

QUIET = dict(baseline=0.0, noise_gaussian_sd=0.0, noise_poisson_scale=0.0, attenuation_strength=0.0)


def cond_volume(values):
    return VoxelVolume(np.asarray(values, dtype=np.float64), intensity_range=(-1.0, 1.0))


class TestBlur:
    def test_point_source_matches_dense_convolution(self):
        data = np.zeros((25, 25, 25))
        data[12, 12, 12] = 1.0
        mask = VoxelVolume(data)
        params = RenderParams(psf_sigma=(1.5, 1.0, 2.0), signal_fg=1.0, **QUIET)
        got = render_patch(mask, neutral_map(mask.dims), params).data
        want = dense_gaussian_blur(data, (2.0, 1.0, 1.5))
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_random_field_matches_dense_convolution(self):
        rng = np.random.default_rng(0)
        data = rng.random((12, 14, 10))
        mask = VoxelVolume(data)
        params = RenderParams(psf_sigma=(1.0, 1.5, 0.8), signal_fg=1.0, **QUIET)
        got = render_patch(mask, neutral_map(mask.dims), params).data
        want = dense_gaussian_blur(data, (0.8, 1.5, 1.0))
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_blur_preserves_interior_mass(self):
        data = np.zeros((25, 25, 25))
        data[12, 12, 12] = 1.0
        mask = VoxelVolume(data)
        params = RenderParams(psf_sigma=(1.5, 1.5, 2.0), signal_fg=0.75, **QUIET)
        got = render_patch(mask, neutral_map(mask.dims), params).data
        assert got.sum() == pytest.approx(0.75, rel=1e-9)

    def test_zero_sigma_skips_blur(self):
        rng = np.random.default_rng(1)
        data = (rng.random((8, 8, 8)) < 0.4).astype(np.float64)
        mask = VoxelVolume(data)
        params = RenderParams(psf_sigma=(0.0, 0.0, 0.0), signal_fg=0.5, **QUIET)
        got = render_patch(mask, neutral_map(mask.dims), params).data
        np.testing.assert_array_equal(got, 0.5 * data)


class TestPipelineStages:
    def test_empty_mask_gives_flat_baseline(self):
        mask = VoxelVolume.zeros((9, 9, 9))
        params = RenderParams(baseline=0.06, noise_gaussian_sd=0.0, noise_poisson_scale=0.0)
        got = render_patch(mask, neutral_map(mask.dims), params).data
        assert (got == 0.06).all()

    def test_linear_before_noise(self):
        rng = np.random.default_rng(2)
        a = rng.random((10, 10, 10)) * 0.5
        b = rng.random((10, 10, 10)) * 0.5
        params = RenderParams(psf_sigma=(1.0, 1.0, 1.0), signal_fg=0.3, **QUIET)
        cond = neutral_map((10, 10, 10))
        ra = render_patch(VoxelVolume(a), cond, params).data
        rb = render_patch(VoxelVolume(b), cond, params).data
        rab = render_patch(VoxelVolume(a + b), cond, params).data
        np.testing.assert_allclose(rab, ra + rb, atol=1e-12)

    def test_attenuation_kills_saturated_regions(self):
        data = np.ones((4, 4, 8))
        cond = np.zeros((4, 4, 8))
        cond[..., :4] = 1.0  # fully saturated left half
        mask = VoxelVolume(data)
        params = RenderParams(
            psf_sigma=(0.0, 0.0, 0.0),
            signal_fg=0.8,
            baseline=0.0,
            noise_gaussian_sd=0.0,
            noise_poisson_scale=0.0,
            attenuation_strength=1.0,
        )
        got = render_patch(mask, cond_volume(cond), params).data
        assert (got[..., :4] == 0.0).all()
        assert (got[..., 4:] == 0.8).all()

    def test_attenuation_scales_with_strength(self):
        data = np.ones((4, 4, 4))
        cond = np.full((4, 4, 4), 0.5)
        params = RenderParams(
            psf_sigma=(0.0, 0.0, 0.0),
            signal_fg=0.8,
            baseline=0.0,
            noise_gaussian_sd=0.0,
            noise_poisson_scale=0.0,
            attenuation_strength=0.5,
        )
        got = render_patch(VoxelVolume(data), cond_volume(cond), params).data
        np.testing.assert_allclose(got, 0.8 * (1.0 - 0.25), atol=1e-12)

    def test_negative_conditioning_never_boosts(self):
        data = np.ones((4, 4, 4))
        cond = np.full((4, 4, 4), -0.8)  # background side of the encoding
        params = RenderParams(
            psf_sigma=(0.0, 0.0, 0.0),
            signal_fg=0.6,
            baseline=0.0,
            noise_gaussian_sd=0.0,
            noise_poisson_scale=0.0,
            attenuation_strength=1.0,
        )
        got = render_patch(VoxelVolume(data), cond_volume(cond), params).data
        np.testing.assert_array_equal(got, np.full_like(got, 0.6))

    def test_wrapper_and_volume_conditioning_agree(self):
        rng = np.random.default_rng(3)
        mask = VoxelVolume((rng.random((8, 8, 8)) < 0.5).astype(np.uint8))
        cm = positional_map(mask, alpha=20.0)
        params = RenderParams()
        a = render_patch(mask, cm, params).data
        b = render_patch(mask, cm.map, params).data
        np.testing.assert_array_equal(a, b)

    def test_output_clipped_to_unit_interval(self):
        rng = np.random.default_rng(4)
        mask = VoxelVolume((rng.random((12, 12, 12)) < 0.7).astype(np.uint8))
        params = RenderParams(signal_fg=1.0, baseline=0.4, noise_gaussian_sd=0.3)
        got = render_patch(mask, neutral_map(mask.dims), params).data
        assert got.min() >= 0.0 and got.max() <= 1.0

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            render_patch(VoxelVolume.zeros((8, 8, 8)), neutral_map((9, 9, 9)), RenderParams())


class TestNoise:
    def test_seeded_runs_are_bit_identical(self):
        rng = np.random.default_rng(5)
        mask = VoxelVolume((rng.random((14, 14, 14)) < 0.5).astype(np.uint8))
        cond = neutral_map(mask.dims)
        params = RenderParams(noise_gaussian_sd=0.05, noise_poisson_scale=0.01, rng_seed=9)
        a = render_patch(mask, cond, params).data
        b = render_patch(mask, cond, params).data
        np.testing.assert_array_equal(a, b)

    def test_gaussian_noise_statistics(self):
        mask = VoxelVolume.zeros((40, 40, 40))
        params = RenderParams(
            baseline=0.5, noise_gaussian_sd=0.02, noise_poisson_scale=0.0, rng_seed=1
        )
        got = render_patch(mask, neutral_map(mask.dims), params).data
        assert got.mean() == pytest.approx(0.5, abs=0.001)
        assert got.std() == pytest.approx(0.02, rel=0.05)

    def test_shot_noise_statistics(self):
        mask = VoxelVolume.zeros((40, 40, 40))
        params = RenderParams(
            baseline=0.5, noise_gaussian_sd=0.0, noise_poisson_scale=0.01, rng_seed=2
        )
        got = render_patch(mask, neutral_map(mask.dims), params).data
        # variance of scale * Poisson(v / scale) is scale * v
        assert got.mean() == pytest.approx(0.5, abs=0.001)
        assert got.std() == pytest.approx(np.sqrt(0.01 * 0.5), rel=0.05)


class TestGenerators:
    def test_identity_generator_is_exact(self):
        rng = np.random.default_rng(6)
        image = VoxelVolume(rng.random((10, 10, 10)))
        assert identity_check(image, IdentityGenerator()) == 0.0

    def test_identity_check_measures_offsets(self):
        class Offset(Generator):
            def apply(self, mask_patch, conditioning_patch):
                return VoxelVolume(
                    np.clip(mask_patch.data + 0.1, 0.0, 1.0), spacing=mask_patch.spacing
                )

        rng = np.random.default_rng(7)
        image = VoxelVolume(rng.random((10, 10, 10)) * 0.8)
        assert identity_check(image, Offset()) == pytest.approx(0.1, abs=1e-12)

    def test_classical_renderer_identity_is_finite(self):
        rng = np.random.default_rng(8)
        mask = VoxelVolume((rng.random((16, 16, 16)) < 0.5).astype(np.uint8))
        renderer = ClassicalRenderer()
        image = renderer.apply(mask, neutral_map(mask.dims))
        err = identity_check(image, renderer)
        assert 0.0 < err < 1.0

    def test_per_call_streams_differ_and_reset_rewinds(self):
        rng = np.random.default_rng(9)
        mask = VoxelVolume((rng.random((12, 12, 12)) < 0.5).astype(np.uint8))
        cond = neutral_map(mask.dims)
        renderer = ClassicalRenderer(RenderParams(noise_gaussian_sd=0.05))
        first = renderer.apply(mask, cond).data
        second = renderer.apply(mask, cond).data
        assert not np.array_equal(first, second)
        renderer.reset()
        np.testing.assert_array_equal(renderer.apply(mask, cond).data, first)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            RenderParams(psf_sigma=(1.0, 1.0))
        with pytest.raises(ValueError):
            RenderParams(psf_sigma=(-1.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            RenderParams(signal_fg=1.5)
        with pytest.raises(ValueError):
            RenderParams(baseline=-0.1)
        with pytest.raises(ValueError):
            RenderParams(noise_gaussian_sd=-0.01)
        with pytest.raises(ValueError):
            RenderParams(attenuation_strength=1.2)
