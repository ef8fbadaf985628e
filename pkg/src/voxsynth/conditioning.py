"""Positional conditioning maps derived from the specimen boundary distance.

Foreground voxels are encoded as ``tanh(dist / alpha)`` and background
voxels as ``tanh(-dist / beta)``, with ``dist`` the physical distance to
the nearest voxel of the opposite class. Large ``alpha`` keeps deep
foreground close to zero (weak depth attenuation downstream); small
``alpha`` saturates quickly toward one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import VoxelVolume, euclidean_distance_transform

__all__ = ["ConditioningMap", "positional_map", "quality_sweep", "neutral_map"]


@dataclass
class ConditioningMap:
    """Signed positional encoding of a foreground mask."""

    map: VoxelVolume
    alpha: float
    beta: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")

    @property
    def dims(self):
        return self.map.dims


def _build_map(mask: VoxelVolume, dist: np.ndarray, alpha: float, beta: float, meta) -> ConditioningMap:
    fg = mask.data.astype(bool)
    values = np.where(fg, np.tanh(dist / alpha), -np.tanh(dist / beta))
    vol = VoxelVolume(
        values, spacing=mask.spacing, intensity_range=(-1.0, 1.0), metadata=dict(meta)
    )
    return ConditioningMap(map=vol, alpha=float(alpha), beta=float(beta), metadata=dict(meta))


def positional_map(foreground: VoxelVolume, alpha: float = 100.0, beta: float = 100.0) -> ConditioningMap:
    """Positional conditioning of a binary mask.

    All values lie in (-1, 1); foreground is positive (approaching 0 next
    to the boundary), background negative. Degenerate single-class masks
    inherit the distance transform's ``degenerate`` flag.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError(f"alpha and beta must be positive, got {alpha}, {beta}")
    edt = euclidean_distance_transform(foreground)
    return _build_map(foreground, edt.data, alpha, beta, edt.metadata)


def quality_sweep(foreground: VoxelVolume, alphas, beta: float = 100.0) -> list:
    """One conditioning map per alpha, sharing a single distance transform.

    The background halves of all returned maps are identical; only the
    foreground encoding varies with alpha.
    """
    alphas = list(alphas)
    if not alphas:
        raise ValueError("at least one alpha is required")
    if any(a <= 0 for a in alphas):
        raise ValueError(f"alphas must be positive, got {alphas!r}")
    edt = euclidean_distance_transform(foreground)
    return [_build_map(foreground, edt.data, a, beta, edt.metadata) for a in alphas]


def neutral_map(dims, spacing=(1.0, 1.0, 1.0), alpha: float = 100.0, beta: float = 100.0) -> ConditioningMap:
    """All-zero conditioning (no positional attenuation downstream)."""
    vol = VoxelVolume.zeros(dims, spacing=spacing, intensity_range=(-1.0, 1.0))
    return ConditioningMap(map=vol, alpha=alpha, beta=beta)
