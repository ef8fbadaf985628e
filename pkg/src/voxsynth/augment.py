"""Adaptive discriminator augmentation: image corruptions and the p_aug controller.

Five corruption kinds are applied in a fixed order, each gated by an
independent Bernoulli(p_aug) draw. The controller nudges p_aug so that the
mean sign of discriminator outputs on real samples hovers at a target
value, the classic overfitting heuristic for adversarial training on small
datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .volume import VoxelVolume

__all__ = [
    "AugmentationOp",
    "AdaController",
    "default_augmentations",
    "apply_augmentations",
    "estimate_r_ada",
    "controller_step",
]

_KINDS = ("intensity_scale", "gaussian_noise", "voxel_shuffle", "inpaint", "linear_ramp")


@dataclass(frozen=True)
class AugmentationOp:
    """One corruption: a kind from the fixed vocabulary plus its parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}, expected one of {_KINDS}")


def default_augmentations() -> list:
    """The standard op list, in application order."""
    return [
        AugmentationOp("intensity_scale", {"low": 0.6, "high": 1.2}),
        AugmentationOp("gaussian_noise", {"sd": 0.1}),
        AugmentationOp("voxel_shuffle", {"region": (25, 25, 25)}),
        AugmentationOp("inpaint", {"region": (15, 15, 15), "fill": "mean"}),
        AugmentationOp("linear_ramp", {"min_factor_low": 0.3, "min_factor_high": 0.9}),
    ]


def _random_region(shape, region_xyz, rng):
    """Random axis-aligned box; clamped to the patch when it does not fit."""
    rz, ry, rx = int(region_xyz[2]), int(region_xyz[1]), int(region_xyz[0])
    nz, ny, nx = shape
    sz, sy, sx = min(rz, nz), min(ry, ny), min(rx, nx)
    clamped = (sz, sy, sx) != (rz, ry, rx)
    oz = int(rng.integers(0, nz - sz + 1))
    oy = int(rng.integers(0, ny - sy + 1))
    ox = int(rng.integers(0, nx - sx + 1))
    return (slice(oz, oz + sz), slice(oy, oy + sy), slice(ox, ox + sx)), clamped


def _apply_op(data: np.ndarray, op: AugmentationOp, rng: np.random.Generator) -> np.ndarray:
    p = op.params
    if op.kind == "intensity_scale":
        return data * rng.uniform(p.get("low", 0.6), p.get("high", 1.2))
    if op.kind == "gaussian_noise":
        return data + rng.normal(0.0, p.get("sd", 0.1), size=data.shape)
    if op.kind == "voxel_shuffle":
        region, _ = _random_region(data.shape, p.get("region", (25, 25, 25)), rng)
        out = data.copy()
        block = out[region]
        out[region] = rng.permutation(block.reshape(-1)).reshape(block.shape)
        return out
    if op.kind == "inpaint":
        region, _ = _random_region(data.shape, p.get("region", (15, 15, 15)), rng)
        fill = p.get("fill", "mean")
        out = data.copy()
        if fill == "mean":
            out[region] = data.mean()
        elif fill == "zero":
            out[region] = 0.0
        elif fill == "noise":
            out[region] = rng.uniform(data.min(), data.max(), size=out[region].shape)
        else:
            raise ValueError(f"unknown inpaint fill {fill!r}")
        return out
    if op.kind == "linear_ramp":
        axis = int(rng.integers(0, 3))
        fmin = rng.uniform(p.get("min_factor_low", 0.3), p.get("min_factor_high", 0.9))
        n = data.shape[axis]
        ramp = np.linspace(1.0, fmin, n) if n > 1 else np.ones(1)
        if bool(rng.integers(0, 2)):
            ramp = ramp[::-1]
        shape = [1, 1, 1]
        shape[axis] = n
        return data * ramp.reshape(shape)
    raise ValueError(f"unknown augmentation kind {op.kind!r}")


def apply_augmentations(
    patch: VoxelVolume, ops, p_aug: float, rng: np.random.Generator
) -> VoxelVolume:
    """Apply each op with probability ``p_aug``, in list order.

    ``p_aug = 0`` returns a bit-exact copy; ``p_aug = 1`` applies every op.
    One gate variate is drawn per op regardless of the outcome, so a fixed
    seed yields the same gating pattern independent of op parameters.
    """
    if not 0.0 <= p_aug <= 1.0:
        raise ValueError(f"p_aug must be in [0, 1], got {p_aug}")
    data = np.asarray(patch.data, dtype=np.float64).copy()
    applied = []
    for op in ops:
        gate = rng.random()
        if gate < p_aug:
            data = _apply_op(data, op, rng)
            applied.append(op.kind)
    return VoxelVolume(
        data,
        spacing=patch.spacing,
        intensity_range=patch.intensity_range,
        metadata={**patch.metadata, "augmentations": applied},
    )


def estimate_r_ada(outputs) -> float:
    """Mean sign of discriminator outputs; sign(0) counts as 0."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.size == 0:
        raise ValueError("cannot estimate r_ada from an empty batch")
    return float(np.mean(np.sign(outputs)))


@dataclass(frozen=True)
class AdaController:
    """State of the augmentation probability feedback loop.

    ``p_aug`` is adjusted by ``step`` whenever an epoch divisible by
    ``period`` reports an overfitting estimate off target: increased while
    the estimate exceeds ``target``, decreased below it, held at equality,
    and clamped to [0, 1]. ``history`` records every (epoch, estimate) the
    controller has seen.
    """

    p_aug: float = 0.0
    target: float = 0.6
    step: float = 0.05
    period: int = 1
    history: tuple = ()
    last_update_epoch: int = None

    def __post_init__(self):
        if not 0.0 <= self.p_aug <= 1.0:
            raise ValueError(f"p_aug must be in [0, 1], got {self.p_aug}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")


def controller_step(ctrl: AdaController, r_estimate: float, epoch: int) -> AdaController:
    """Advance the controller by one observation.

    Updates fire only on epochs divisible by ``period`` and at most once
    per epoch; other calls only extend the history. Epochs must not
    decrease across calls.
    """
    if not np.isfinite(r_estimate):
        raise ValueError(f"r estimate must be finite, got {r_estimate}")
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if ctrl.history and epoch < ctrl.history[-1][0]:
        raise ValueError(
            f"epoch went backwards: {epoch} after {ctrl.history[-1][0]}"
        )
    history = ctrl.history + ((int(epoch), float(r_estimate)),)
    p = ctrl.p_aug
    last = ctrl.last_update_epoch
    if epoch % ctrl.period == 0 and epoch != ctrl.last_update_epoch:
        if r_estimate > ctrl.target:
            p = min(1.0, p + ctrl.step)
        elif r_estimate < ctrl.target:
            p = max(0.0, p - ctrl.step)
        last = epoch
    return replace(ctrl, p_aug=p, history=history, last_update_epoch=last)
