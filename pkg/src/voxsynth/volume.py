"""Dense voxel-grid containers and the 3D morphology shared by every stage.

Arrays are stored row-major with z as the slowest axis, i.e. ``data[z, y, x]``.
All user-facing tuples (dims, spacing, patch sizes, margins) are given in
(x, y, z) order; the two conventions meet only inside this module and
:func:`shape_from_dims` / :func:`dims_from_shape`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

__all__ = [
    "Point3",
    "VoxelVolume",
    "LabelVolume",
    "shape_from_dims",
    "dims_from_shape",
    "euclidean_distance_transform",
    "dilate",
    "boundary_mask",
    "boundary_voxels",
]


def shape_from_dims(dims):
    """(nx, ny, nz) dims tuple -> numpy shape (nz, ny, nx)."""
    nx, ny, nz = dims
    return (int(nz), int(ny), int(nx))


def dims_from_shape(shape):
    """numpy shape (nz, ny, nx) -> (nx, ny, nz) dims tuple."""
    nz, ny, nx = shape
    return (int(nx), int(ny), int(nz))


@dataclass(frozen=True)
class Point3:
    """Continuous position in voxel space, (x, y, z)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate in ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass
class VoxelVolume:
    """Dense 3D scalar grid with anisotropic voxel spacing.

    Parameters
    ----------
    data : ndarray
        3D array indexed ``[z, y, x]``.
    spacing : tuple of float
        Physical size of one voxel along (x, y, z). Strictly positive.
    intensity_range : tuple of float
        Nominal value range of the grid. Images use [0, 1], binary masks
        {0, 1}, conditioning maps (-1, 1). Used by the I/O layer for
        fixed-point scaling.
    metadata : dict
        Free-form provenance and flags (degenerate cases, clipping, seeds).
    """

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    intensity_range: tuple = (0.0, 1.0)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"expected 3D data, got shape {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(not math.isfinite(s) or s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive finite values, got {self.spacing!r}")
        lo, hi = self.intensity_range
        if not (hi > lo):
            raise ValueError(f"intensity_range must be increasing, got {self.intensity_range!r}")
        self.intensity_range = (float(lo), float(hi))

    @property
    def dims(self):
        """Voxel counts as (nx, ny, nz)."""
        return dims_from_shape(self.data.shape)

    @classmethod
    def zeros(cls, dims, spacing=(1.0, 1.0, 1.0), dtype=np.float64, **kwargs):
        return cls(np.zeros(shape_from_dims(dims), dtype=dtype), spacing=spacing, **kwargs)

    def is_binary(self) -> bool:
        vals = np.unique(self.data)
        return bool(np.isin(vals, (0, 1)).all())

    def copy(self) -> "VoxelVolume":
        return VoxelVolume(
            self.data.copy(),
            spacing=self.spacing,
            intensity_range=self.intensity_range,
            metadata=dict(self.metadata),
        )


@dataclass
class LabelVolume:
    """Dense 3D grid of nonnegative integer instance labels (0 = background)."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"expected 3D label data, got shape {self.data.shape}")
        if not np.issubdtype(self.data.dtype, np.integer):
            raise ValueError(f"labels must be integer, got dtype {self.data.dtype}")
        if self.data.size and self.data.min() < 0:
            raise ValueError("labels must be nonnegative")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive values, got {self.spacing!r}")

    @property
    def dims(self):
        return dims_from_shape(self.data.shape)

    def labels(self) -> np.ndarray:
        """Sorted distinct nonzero labels."""
        vals = np.unique(self.data)
        return vals[vals > 0]

    def foreground_mask(self) -> VoxelVolume:
        return VoxelVolume(
            (self.data > 0).astype(np.uint8), spacing=self.spacing, intensity_range=(0.0, 1.0)
        )


def _require_binary(mask: VoxelVolume) -> np.ndarray:
    m = np.asarray(mask.data)
    if not np.isin(np.unique(m), (0, 1)).all():
        raise ValueError("mask must contain only {0, 1}")
    return m.astype(bool)


def _border_distance_field(shape, sampling) -> np.ndarray:
    """Distance from every voxel to the nearest position just outside the grid."""
    padded = np.pad(np.ones(shape, dtype=np.uint8), 1, constant_values=0)
    dist = ndimage.distance_transform_edt(padded, sampling=sampling)
    return dist[1:-1, 1:-1, 1:-1]


def euclidean_distance_transform(mask: VoxelVolume, signed: bool = False) -> VoxelVolume:
    """Exact Euclidean distance to the nearest voxel of the opposite class.

    For every foreground voxel the value is the physical distance (per-axis
    spacing applied) to the nearest background voxel; for every background
    voxel, to the nearest foreground voxel. The volume border counts as
    background, so foreground voxels additionally see a virtual background
    layer just outside the grid.

    Distances are reported as magnitudes for both classes regardless of
    ``signed``; the sign convention is applied downstream by the positional
    conditioning stage, where the class is recovered from the mask. The flag
    is recorded in the output metadata.

    Degenerate all-foreground / all-background masks yield the distance to
    the volume border everywhere, with ``metadata["degenerate"] = True``.
    """
    m = _require_binary(mask)
    sx, sy, sz = mask.spacing
    sampling = (sz, sy, sx)

    meta = {"signed": bool(signed)}
    if not m.any() or m.all():
        out = _border_distance_field(m.shape, sampling)
        meta["degenerate"] = True
        return VoxelVolume(
            out, spacing=mask.spacing, intensity_range=(0.0, float(max(out.max(), 1.0))), metadata=meta
        )

    # Foreground side: pad with one background layer so the border acts as
    # background. The nearest virtual voxel is always face-adjacent, so a
    # single layer is sufficient.
    padded = np.pad(m, 1, constant_values=0)
    fg_dist = ndimage.distance_transform_edt(padded, sampling=sampling)[1:-1, 1:-1, 1:-1]
    bg_dist = ndimage.distance_transform_edt(~m, sampling=sampling)
    out = np.where(m, fg_dist, bg_dist)
    return VoxelVolume(
        out, spacing=mask.spacing, intensity_range=(0.0, float(max(out.max(), 1.0))), metadata=meta
    )


@lru_cache(maxsize=32)
def _euclidean_ball(radius_voxels: int) -> np.ndarray:
    r = int(radius_voxels)
    ax = np.arange(-r, r + 1)
    dz, dy, dx = np.meshgrid(ax, ax, ax, indexing="ij")
    return (dz * dz + dy * dy + dx * dx) <= r * r


def dilate(mask: VoxelVolume, radius_voxels: int) -> VoxelVolume:
    """Binary dilation with a Euclidean ball of the given voxel radius.

    Radius 0 returns an identical copy. Radius 1 turns a single voxel into
    the 6-connected ball (7 voxels).
    """
    if radius_voxels < 0:
        raise ValueError(f"radius must be >= 0, got {radius_voxels}")
    m = _require_binary(mask)
    if radius_voxels == 0:
        out = m
    else:
        out = ndimage.binary_dilation(m, structure=_euclidean_ball(radius_voxels))
    return VoxelVolume(
        out.astype(np.uint8),
        spacing=mask.spacing,
        intensity_range=(0.0, 1.0),
        metadata=dict(mask.metadata),
    )


_SIX_NEIGHBORHOOD = ndimage.generate_binary_structure(3, 1)


def boundary_mask(mask: VoxelVolume) -> VoxelVolume:
    """Foreground voxels with at least one 6-connected background neighbor.

    The volume border counts as background, so foreground touching the grid
    edge is part of the boundary.
    """
    m = _require_binary(mask)
    interior = ndimage.binary_erosion(m, structure=_SIX_NEIGHBORHOOD, border_value=0)
    return VoxelVolume(
        (m & ~interior).astype(np.uint8), spacing=mask.spacing, intensity_range=(0.0, 1.0)
    )


def boundary_voxels(mask: VoxelVolume) -> set:
    """Boundary voxel positions (see :func:`boundary_mask`) as a set of Point3."""
    b = boundary_mask(mask).data.astype(bool)
    zz, yy, xx = np.nonzero(b)
    return {Point3(float(x), float(y), float(z)) for x, y, z in zip(xx, yy, zz)}
