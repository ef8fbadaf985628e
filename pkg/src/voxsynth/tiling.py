"""Overlap-weighted patch tiling for volumes larger than one generator patch.

Patches are laid out with a fixed stride, rendered independently, cropped
by a safety margin, and blended back by a concentric weight window so that
patch borders do not imprint seams. Volume-border faces keep their crop
band (there is no neighboring patch to cover them); the last patch per axis
is shifted inward so nothing is padded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditioning import ConditioningMap
from .volume import VoxelVolume, shape_from_dims

__all__ = [
    "TilingPlan",
    "WeightMap",
    "plan_tiling",
    "concentric_weights",
    "retained_region",
    "process_volume",
]


@dataclass(frozen=True)
class TilingPlan:
    """Patch layout over a volume; all tuples in (x, y, z) order."""

    volume_dims: tuple
    patch_dims: tuple
    d_overlap: tuple
    d_crop: tuple
    patch_origins: tuple

    @property
    def stride(self):
        return tuple(
            p - 2 * c - o for p, c, o in zip(self.patch_dims, self.d_crop, self.d_overlap)
        )

    @property
    def n_patches(self) -> int:
        return len(self.patch_origins)


@dataclass
class WeightMap:
    """Blending window over patch dims; strictly positive, peak 1 at the center."""

    weights: VoxelVolume
    floor_epsilon: float = field(default=0.01)


def _axis_positions(volume: int, patch: int, stride: int):
    if patch == volume:
        return [0]
    n = math.ceil((volume - patch) / stride) + 1
    positions = sorted({min(i * stride, volume - patch) for i in range(n)})
    return positions


def plan_tiling(
    volume_dims,
    patch_dims=(128, 128, 64),
    d_overlap=(30, 30, 15),
    d_crop=(30, 30, 15),
) -> TilingPlan:
    """Compute patch origins covering a volume.

    Per axis the stride is ``patch - 2 * crop - overlap``; origins advance
    by it and the last origin is clamped so the final patch ends exactly at
    the volume border. After cropping, the retained regions of consecutive
    patches overlap by exactly ``d_overlap`` voxels (more where clamping
    shifted the last patch) and jointly cover every voxel.
    """
    volume_dims = tuple(int(v) for v in volume_dims)
    patch_dims = tuple(int(p) for p in patch_dims)
    d_overlap = tuple(int(o) for o in d_overlap)
    d_crop = tuple(int(c) for c in d_crop)
    for name, t in (("volume_dims", volume_dims), ("patch_dims", patch_dims),
                    ("d_overlap", d_overlap), ("d_crop", d_crop)):
        if len(t) != 3:
            raise ValueError(f"{name} must have three entries, got {t!r}")
    if any(v < 1 for v in volume_dims) or any(p < 1 for p in patch_dims):
        raise ValueError("volume and patch dims must be positive")
    if any(o < 0 for o in d_overlap) or any(c < 0 for c in d_crop):
        raise ValueError("margins must be nonnegative")
    for axis, (v, p, o, c) in enumerate(zip(volume_dims, patch_dims, d_overlap, d_crop)):
        if p > v:
            raise ValueError(
                f"patch ({p}) exceeds volume ({v}) along axis {'xyz'[axis]}; "
                "pad the volume to at least the patch size before tiling"
            )
        if p - 2 * c - o < 1:
            raise ValueError(
                f"margins leave no stride along axis {'xyz'[axis]}: "
                f"patch {p}, crop {c}, overlap {o}"
            )

    per_axis = [
        _axis_positions(v, p, p - 2 * c - o)
        for v, p, o, c in zip(volume_dims, patch_dims, d_overlap, d_crop)
    ]
    origins = tuple(
        (ox, oy, oz) for oz in per_axis[2] for oy in per_axis[1] for ox in per_axis[0]
    )
    return TilingPlan(
        volume_dims=volume_dims,
        patch_dims=patch_dims,
        d_overlap=d_overlap,
        d_crop=d_crop,
        patch_origins=origins,
    )


def retained_region(plan: TilingPlan, origin):
    """Absolute (start, stop) per axis of the blended part of one patch.

    Crop bands are dropped except on faces flush with the volume border,
    which nothing else would cover.
    """
    region = []
    for o, p, c, v in zip(origin, plan.patch_dims, plan.d_crop, plan.volume_dims):
        lo = o + (c if o > 0 else 0)
        hi = o + p - (c if o + p < v else 0)
        region.append((lo, hi))
    return tuple(region)


def _mirrored_window(n: int) -> np.ndarray:
    """Raised-cosine window with exact reflection symmetry."""
    if n == 1:
        return np.ones(1)
    x = (np.arange(n, dtype=np.float64) + 0.5) / n
    w = 0.5 * (1.0 - np.cos(2.0 * math.pi * x))
    half = (n + 1) // 2
    w[n - half :] = w[:half][::-1].copy()
    return w


def concentric_weights(patch_dims, floor_epsilon: float = 0.01) -> WeightMap:
    """Separable raised-cosine window rescaled to [floor_epsilon, 1].

    The product of per-axis windows peaks at the patch center, falls toward
    faces and corners, stays strictly positive everywhere, and is exactly
    symmetric under reflection of any axis.
    """
    if not 0 < floor_epsilon < 1:
        raise ValueError(f"floor_epsilon must be in (0, 1), got {floor_epsilon}")
    nx, ny, nz = (int(d) for d in patch_dims)
    if min(nx, ny, nz) < 1:
        raise ValueError(f"patch dims must be positive, got {patch_dims!r}")
    wz = _mirrored_window(nz)
    wy = _mirrored_window(ny)
    wx = _mirrored_window(nx)
    w = wz[:, None, None] * wy[None, :, None] * wx[None, None, :]
    w_min, w_max = w.min(), w.max()
    if w_max > w_min:
        w = floor_epsilon + (1.0 - floor_epsilon) * (w - w_min) / (w_max - w_min)
    else:
        w = np.ones_like(w)
    vol = VoxelVolume(w, intensity_range=(0.0, 1.0))
    return WeightMap(weights=vol, floor_epsilon=float(floor_epsilon))


def process_volume(
    mask: VoxelVolume,
    cond: ConditioningMap,
    generator,
    plan: TilingPlan,
    floor_epsilon: float = 0.01,
) -> VoxelVolume:
    """Run a generator patchwise and blend the retained regions.

    Every output voxel is the weight-normalized sum of all retained patch
    contributions, i.e. a convex combination of patch values; a single
    contributor passes through unchanged, which makes the identity
    generator an exact round trip. Patches are visited in a fixed order so
    floating-point accumulation is reproducible.
    """
    if mask.data.shape != shape_from_dims(plan.volume_dims):
        raise ValueError(
            f"mask dims {mask.dims} do not match plan volume dims {plan.volume_dims}"
        )
    if cond.map.data.shape != mask.data.shape:
        raise ValueError("conditioning dims do not match mask dims")

    window = concentric_weights(plan.patch_dims, floor_epsilon).weights.data
    acc = np.zeros(mask.data.shape, dtype=np.float64)
    wacc = np.zeros(mask.data.shape, dtype=np.float64)

    for origin in plan.patch_origins:
        ox, oy, oz = origin
        px, py, pz = plan.patch_dims
        patch_slice = (slice(oz, oz + pz), slice(oy, oy + py), slice(ox, ox + px))
        mask_patch = VoxelVolume(
            mask.data[patch_slice], spacing=mask.spacing, intensity_range=mask.intensity_range
        )
        cond_patch = ConditioningMap(
            map=VoxelVolume(
                cond.map.data[patch_slice], spacing=mask.spacing, intensity_range=(-1.0, 1.0)
            ),
            alpha=cond.alpha,
            beta=cond.beta,
        )
        out = generator.apply(mask_patch, cond_patch)
        if out.data.shape != mask_patch.data.shape:
            raise ValueError(
                f"generator returned shape {out.data.shape} for patch at origin {origin}, "
                f"expected {mask_patch.data.shape}"
            )
        region = retained_region(plan, origin)
        (x0, x1), (y0, y1), (z0, z1) = region
        absolute = (slice(z0, z1), slice(y0, y1), slice(x0, x1))
        local = (
            slice(z0 - oz, z1 - oz),
            slice(y0 - oy, y1 - oy),
            slice(x0 - ox, x1 - ox),
        )
        acc[absolute] += out.data[local] * window[local]
        wacc[absolute] += window[local]

    if not (wacc > 0).all():
        raise RuntimeError("tiling plan left voxels uncovered")
    return VoxelVolume(
        acc / wacc,
        spacing=mask.spacing,
        intensity_range=(0.0, 1.0),
        metadata={"n_patches": plan.n_patches},
    )
