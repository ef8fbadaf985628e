"""Cellular scene scaffolding inside an organism mask.

Pipeline: an organism-scale foreground mask is populated with cell center
seeds layer by layer (shells of the interior depth map), the foreground is
partitioned into cell instances by a weighted nearest-seed rule, and the
walls between instances become the membrane mask. Optionally each cell
receives a nucleus from the parametric shape route.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .shapes import (
    SHShape,
    ShapeModel,
    random_sh_shape,
    rasterize_sh,
    sample_shape_model,
    voxelize_boundary_points,
)
from .volume import LabelVolume, Point3, VoxelVolume, euclidean_distance_transform

__all__ = [
    "CellSeed",
    "Scene",
    "place_cells_layerwise",
    "weighted_tessellation",
    "extract_membranes",
    "generate_organism_shape",
    "build_scene",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellSeed:
    """Cell center with its tessellation weight and placement shell index."""

    position: Point3
    weight: float
    layer_index: int

    def __post_init__(self):
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ValueError(f"seed weight must be positive, got {self.weight}")
        if self.layer_index < 0:
            raise ValueError(f"layer index must be >= 0, got {self.layer_index}")


@dataclass
class Scene:
    """Fully-annotated synthetic specimen."""

    foreground: VoxelVolume
    seeds: list
    instances: LabelVolume
    membranes: VoxelVolume
    nuclei: VoxelVolume = None
    metadata: dict = field(default_factory=dict)


def place_cells_layerwise(
    foreground: VoxelVolume,
    cell_radius_prior,
    rng: np.random.Generator,
    weight_range=(0.8, 1.25),
) -> list:
    """Scatter cell seeds shell by shell through the foreground interior.

    The interior depth (distance of each foreground voxel to the nearest
    background voxel) is binned into shells of thickness twice the mean
    cell radius, measured from the outermost foreground depth; layer 0 is
    the outermost shell. Within each shell, candidate voxels are visited in
    random order and accepted while they keep a minimum pairwise distance
    of 1.5 times the mean radius to every seed accepted so far, across all
    layers. Placement proceeds inward while a shell has any admissible
    voxel. Each accepted seed draws its tessellation weight uniformly from
    ``weight_range``.

    Returns an empty list (with a warning) when the foreground cannot host
    a single seed.
    """
    mean_radius = float(cell_radius_prior[0])
    if mean_radius <= 0:
        raise ValueError(f"mean cell radius must be positive, got {mean_radius}")
    w_lo, w_hi = (float(w) for w in weight_range)
    if not (0 < w_lo <= w_hi):
        raise ValueError(f"invalid weight range {weight_range!r}")

    m = foreground.data.astype(bool)
    if not m.any():
        log.warning("foreground is empty, no seeds placed")
        return []
    sx, sy, sz = foreground.spacing

    depth = euclidean_distance_transform(foreground).data
    zz, yy, xx = np.nonzero(m)
    depths = depth[zz, yy, xx]
    shell_thickness = 2.0 * mean_radius
    shell = np.floor((depths - depths.min()) / shell_thickness).astype(np.int64)

    coords = np.stack([xx * sx, yy * sy, zz * sz], axis=1)
    min_dist = 1.5 * mean_radius
    min_dist_sq = min_dist * min_dist

    # grid hash over accepted seeds keeps the admissibility check O(1)
    cell_size = min_dist
    buckets = {}
    accepted = []
    seeds = []

    def admissible(p):
        bx, by, bz = int(p[0] // cell_size), int(p[1] // cell_size), int(p[2] // cell_size)
        for ox in (-1, 0, 1):
            for oy in (-1, 0, 1):
                for oz in (-1, 0, 1):
                    for q in buckets.get((bx + ox, by + oy, bz + oz), ()):
                        d = p - q
                        if d @ d < min_dist_sq:
                            return False
        return True

    for layer in range(int(shell.max()) + 1):
        candidate_idx = np.nonzero(shell == layer)[0]
        if candidate_idx.size == 0:
            continue
        order = rng.permutation(candidate_idx.size)
        for i in order:
            p = coords[candidate_idx[i]]
            if not admissible(p):
                continue
            key = (int(p[0] // cell_size), int(p[1] // cell_size), int(p[2] // cell_size))
            buckets.setdefault(key, []).append(p)
            accepted.append(p)
            seeds.append(
                CellSeed(
                    position=Point3(p[0] / sx, p[1] / sy, p[2] / sz),
                    weight=float(rng.uniform(w_lo, w_hi)),
                    layer_index=layer,
                )
            )

    if not seeds:
        log.warning("foreground too small for a single seed at mean radius %.3g", mean_radius)
    return seeds


def weighted_tessellation(foreground: VoxelVolume, seeds) -> LabelVolume:
    """Partition the foreground among seeds by weighted nearest-center rule.

    Voxel ``x`` gets the label of the seed minimizing
    ``||x - x_seed|| / weight`` (physical distance); exact ties go to the
    lowest seed index. Labels are ``seed index + 1``; background stays 0.
    Every seed must lie on a foreground voxel.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    m = foreground.data.astype(bool)
    sx, sy, sz = foreground.spacing

    for i, s in enumerate(seeds):
        ix, iy, iz = (
            int(round(s.position.x)),
            int(round(s.position.y)),
            int(round(s.position.z)),
        )
        nz, ny, nx = m.shape
        if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz) or not m[iz, iy, ix]:
            raise ValueError(f"seed {i} at {s.position} is outside the foreground")

    zz, yy, xx = np.nonzero(m)
    px = xx * sx
    py = yy * sy
    pz = zz * sz
    best = np.full(px.shape, np.inf)
    label = np.zeros(px.shape, dtype=np.uint32)
    for i, s in enumerate(seeds):
        d = (
            np.sqrt(
                (px - s.position.x * sx) ** 2
                + (py - s.position.y * sy) ** 2
                + (pz - s.position.z * sz) ** 2
            )
            / s.weight
        )
        upd = d < best
        best[upd] = d[upd]
        label[upd] = i + 1

    out = np.zeros(m.shape, dtype=np.uint32)
    out[zz, yy, xx] = label
    counts = np.bincount(label, minlength=len(seeds) + 1)
    empty = [i for i in range(1, len(seeds) + 1) if counts[i] == 0]
    meta = {}
    if empty:
        meta["empty_instances"] = empty
        log.warning("%d seeds own no voxels: %s", len(empty), empty)
    return LabelVolume(out, spacing=foreground.spacing, metadata=meta)


def _axis_shift_differs(labels: np.ndarray, axis: int):
    """Marks voxels whose next/previous 6-neighbor along ``axis`` has a different label.

    Positions outside the grid count as background (label 0).
    """
    diff = np.zeros(labels.shape, dtype=bool)
    n = labels.shape[axis]
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    unequal = labels[tuple(lo)] != labels[tuple(hi)]
    diff[tuple(lo)] |= unequal
    diff[tuple(hi)] |= unequal
    # grid border: any voxel on the face differs from the implicit outside 0
    first = [slice(None)] * 3
    last = [slice(None)] * 3
    first[axis] = 0
    last[axis] = n - 1
    diff[tuple(first)] |= labels[tuple(first)] != 0
    diff[tuple(last)] |= labels[tuple(last)] != 0
    return diff


def extract_membranes(instances: LabelVolume, thickness_voxels: int = 1) -> VoxelVolume:
    """Walls between instances (and the organism surface) as a binary mask.

    A foreground voxel is membrane when any of its six axis neighbors
    carries a different label, including background and the outside of the
    grid; a flat interface therefore produces a two-voxel wall, one voxel
    on each side. ``thickness_voxels - 1`` further 6-connected dilation
    steps, restricted to the foreground, thicken the wall symmetrically.
    """
    if thickness_voxels < 1:
        raise ValueError(f"thickness must be >= 1, got {thickness_voxels}")
    labels = instances.data
    fg = labels > 0
    membrane = np.zeros(labels.shape, dtype=bool)
    for axis in range(3):
        membrane |= _axis_shift_differs(labels, axis)
    membrane &= fg

    six = ndimage.generate_binary_structure(3, 1)
    for _ in range(thickness_voxels - 1):
        membrane = ndimage.binary_dilation(membrane, structure=six) & fg
    return VoxelVolume(
        membrane.astype(np.uint8), spacing=instances.spacing, intensity_range=(0.0, 1.0)
    )


def generate_organism_shape(source, target_dims, rng: np.random.Generator, spacing=(1.0, 1.0, 1.0)) -> VoxelVolume:
    """Binary organism mask from one of the shape routes, centered in the volume.

    ``source`` may be an :class:`SHShape` (rasterized as-is after centering),
    a :class:`ShapeModel` (a random shape is drawn from the mode span), or a
    path to a previously saved binary mask.
    """
    nx, ny, nz = (int(d) for d in target_dims)
    center = Point3((nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0)

    if isinstance(source, SHShape):
        shape = SHShape(
            max_order=source.max_order,
            coefficients=source.coefficients.copy(),
            center=center,
            radius_scale=source.radius_scale,
        )
        return rasterize_sh(shape, target_dims, spacing=spacing)
    if isinstance(source, ShapeModel):
        points = sample_shape_model(source, rng=rng)
        return voxelize_boundary_points(
            points, source.rays, target_dims, spacing=spacing, center=center
        )
    if isinstance(source, (str, Path)):
        from . import io as vio

        vol = vio.load_volume(source)
        if isinstance(vol, LabelVolume):
            return vol.foreground_mask()
        if not vol.is_binary():
            raise ValueError(f"organism mask file {source} is not binary")
        return VoxelVolume(
            vol.data.astype(np.uint8), spacing=vol.spacing, intensity_range=(0.0, 1.0)
        )
    raise TypeError(f"unsupported organism source {type(source).__name__}")


def build_scene(
    foreground_source,
    target_dims,
    cell_radius_prior,
    rng: np.random.Generator,
    spacing=(1.0, 1.0, 1.0),
    weight_range=(0.8, 1.25),
    membrane_thickness: int = 1,
    nuclei_config=None,
) -> Scene:
    """Assemble a fully-annotated scene.

    Runs the organism route, layer-wise seed placement, weighted
    tessellation and membrane extraction; when ``nuclei_config`` (an object
    with ``radius_mean``, ``radius_sd``, ``gamma``, ``l_max``) is given,
    every cell is stamped with a random parametric nucleus clipped to its
    own instance region.
    """
    foreground = generate_organism_shape(foreground_source, target_dims, rng, spacing=spacing)
    if not foreground.data.any():
        raise ValueError("organism mask is empty")
    seeds = place_cells_layerwise(foreground, cell_radius_prior, rng, weight_range=weight_range)
    if not seeds:
        raise ValueError("no cell seeds could be placed in the organism")
    instances = weighted_tessellation(foreground, seeds)
    membranes = extract_membranes(instances, thickness_voxels=membrane_thickness)

    nuclei = None
    if nuclei_config is not None:
        buf = np.zeros(foreground.data.shape, dtype=bool)
        for i, seed in enumerate(seeds):
            r = max(0.5, rng.normal(nuclei_config.radius_mean, nuclei_config.radius_sd))
            shape = random_sh_shape(r, nuclei_config.gamma, nuclei_config.l_max, rng)
            _stamp_nucleus(buf, instances.data, seed, i + 1, shape, spacing)
        nuclei = VoxelVolume(
            buf.astype(np.uint8), spacing=spacing, intensity_range=(0.0, 1.0)
        )

    meta = {
        "n_seeds": len(seeds),
        "empty_instances": instances.metadata.get("empty_instances", []),
    }
    return Scene(
        foreground=foreground,
        seeds=seeds,
        instances=instances,
        membranes=membranes,
        nuclei=nuclei,
        metadata=meta,
    )


def _stamp_nucleus(buf, instance_labels, seed, label, shape, spacing):
    """OR one rasterized nucleus into ``buf``, restricted to the seed's cell."""
    nz, ny, nx = buf.shape
    sx, sy, sz = spacing
    rmax = shape.max_radius()
    cx, cy, cz = seed.position.x, seed.position.y, seed.position.z
    ix0 = max(0, int(math.floor(cx - rmax / sx)) - 1)
    iy0 = max(0, int(math.floor(cy - rmax / sy)) - 1)
    iz0 = max(0, int(math.floor(cz - rmax / sz)) - 1)
    ix1 = min(nx - 1, int(math.ceil(cx + rmax / sx)) + 1)
    iy1 = min(ny - 1, int(math.ceil(cy + rmax / sy)) + 1)
    iz1 = min(nz - 1, int(math.ceil(cz + rmax / sz)) + 1)
    if ix0 > ix1 or iy0 > iy1 or iz0 > iz1:
        return
    local_dims = (ix1 - ix0 + 1, iy1 - iy0 + 1, iz1 - iz0 + 1)
    local = SHShape(
        max_order=shape.max_order,
        coefficients=shape.coefficients,
        center=Point3(cx - ix0, cy - iy0, cz - iz0),
        radius_scale=shape.radius_scale,
    )
    stamped = rasterize_sh(local, local_dims, spacing=spacing).data.astype(bool)
    region = (slice(iz0, iz1 + 1), slice(iy0, iy1 + 1), slice(ix0, ix1 + 1))
    buf[region] |= stamped & (instance_labels[region] == label)
