"""Pipeline configuration: nested dataclasses with a YAML file format.

Every generation parameter lives here with its default; the CLI exposes a
subset as flags and everything through the config file. ``to_dict`` /
``from_dict`` round-trip losslessly, which the tests pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .render import RenderParams

__all__ = [
    "ConfigError",
    "OrganismConfig",
    "NucleiConfig",
    "SceneConfig",
    "ConditioningConfig",
    "TilingConfig",
    "PipelineConfig",
]


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration."""


@dataclass
class OrganismConfig:
    """Organism-scale foreground source.

    ``kind`` selects the route: "sh" rasterizes a random smooth parametric
    shape of the given radius; "mask" loads ``mask_path`` as the foreground.
    """

    kind: str = "sh"
    radius: float = 24.0
    gamma: float = 2.0
    l_max: int = 4
    mask_path: str = None

    def validate(self):
        if self.kind not in ("sh", "mask"):
            raise ConfigError(f"organism.kind must be 'sh' or 'mask', got {self.kind!r}")
        if self.kind == "sh" and self.radius <= 0:
            raise ConfigError(f"organism.radius must be positive, got {self.radius}")
        if self.kind == "mask" and not self.mask_path:
            raise ConfigError("organism.kind 'mask' requires organism.mask_path")


@dataclass
class NucleiConfig:
    """Per-cell nucleus shapes (parametric route)."""

    radius_mean: float = 9.0
    radius_sd: float = 1.0
    gamma: float = 5.0
    l_max: int = 6

    def validate(self):
        if self.radius_mean <= 0 or self.radius_sd < 0:
            raise ConfigError("nuclei radius prior must have positive mean and nonnegative sd")
        if self.gamma < 0 or self.l_max < 0:
            raise ConfigError("nuclei gamma and l_max must be nonnegative")


@dataclass
class SceneConfig:
    volume_dims: tuple = (128, 128, 64)
    spacing: tuple = (1.0, 1.0, 1.0)
    organism: OrganismConfig = field(default_factory=OrganismConfig)
    cell_radius_mean: float = 7.0
    cell_radius_sd: float = 1.0
    seed_weight_range: tuple = (0.8, 1.25)
    membrane_thickness: int = 1
    structure: str = "membranes"
    nuclei: NucleiConfig = None

    def validate(self):
        if len(self.volume_dims) != 3 or any(int(d) < 8 for d in self.volume_dims):
            raise ConfigError(f"scene.volume_dims must be three values >= 8, got {self.volume_dims!r}")
        if len(self.spacing) != 3 or any(float(s) <= 0 for s in self.spacing):
            raise ConfigError(f"scene.spacing must be three positive values, got {self.spacing!r}")
        if self.cell_radius_mean <= 0:
            raise ConfigError(f"scene.cell_radius_mean must be positive, got {self.cell_radius_mean}")
        lo, hi = self.seed_weight_range
        if not (0 < lo <= hi):
            raise ConfigError(f"scene.seed_weight_range must be 0 < lo <= hi, got {self.seed_weight_range!r}")
        if self.membrane_thickness < 1:
            raise ConfigError(f"scene.membrane_thickness must be >= 1, got {self.membrane_thickness}")
        if self.structure not in ("membranes", "nuclei"):
            raise ConfigError(f"scene.structure must be 'membranes' or 'nuclei', got {self.structure!r}")
        if self.structure == "nuclei" and self.nuclei is None:
            raise ConfigError("scene.structure 'nuclei' requires a scene.nuclei section")
        self.organism.validate()
        if self.nuclei is not None:
            self.nuclei.validate()


@dataclass
class ConditioningConfig:
    alpha: float = 100.0
    beta: float = 100.0

    def validate(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError(f"conditioning alpha/beta must be positive, got {self.alpha}, {self.beta}")


@dataclass
class TilingConfig:
    patch_dims: tuple = (128, 128, 64)
    d_overlap: tuple = (30, 30, 15)
    d_crop: tuple = (30, 30, 15)
    weight_floor: float = 0.01

    def validate(self):
        for name, t in (("patch_dims", self.patch_dims), ("d_overlap", self.d_overlap), ("d_crop", self.d_crop)):
            if len(t) != 3:
                raise ConfigError(f"tiling.{name} must have three entries, got {t!r}")
        if any(int(p) < 1 for p in self.patch_dims):
            raise ConfigError(f"tiling.patch_dims must be positive, got {self.patch_dims!r}")
        if not 0 < self.weight_floor < 1:
            raise ConfigError(f"tiling.weight_floor must be in (0, 1), got {self.weight_floor}")
        for axis in range(3):
            p, c, o = int(self.patch_dims[axis]), int(self.d_crop[axis]), int(self.d_overlap[axis])
            if c < 0 or o < 0:
                raise ConfigError("tiling margins must be nonnegative")
            if p - 2 * c - o < 1:
                raise ConfigError(
                    f"tiling margins leave no stride along axis {'xyz'[axis]}"
                )


@dataclass
class PipelineConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    conditioning: ConditioningConfig = field(default_factory=ConditioningConfig)
    render: RenderParams = field(default_factory=RenderParams)
    tiling: TilingConfig = field(default_factory=TilingConfig)
    n_samples: int = 1
    master_seed: int = 0
    output_dir: str = "dataset"
    file_format: str = "tiff"

    def validate(self):
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.file_format not in ("tiff", "raw"):
            raise ConfigError(f"file_format must be 'tiff' or 'raw', got {self.file_format!r}")
        self.scene.validate()
        self.conditioning.validate()
        self.tiling.validate()
        try:
            RenderParams(**asdict(self.render))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for axis in range(3):
            if int(self.tiling.patch_dims[axis]) > int(self.scene.volume_dims[axis]):
                raise ConfigError(
                    "tiling.patch_dims must not exceed scene.volume_dims "
                    f"(axis {'xyz'[axis]}: {self.tiling.patch_dims[axis]} > {self.scene.volume_dims[axis]})"
                )
        return self

    def to_dict(self) -> dict:
        def listify(obj):
            if isinstance(obj, dict):
                return {k: listify(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [listify(v) for v in obj]
            return obj

        return listify(asdict(self))

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def build(klass, section, tuple_keys=()):
            if section is None:
                return None
            if not isinstance(section, dict):
                raise ConfigError(f"expected a mapping for {klass.__name__}, got {type(section).__name__}")
            allowed = set(klass.__dataclass_fields__)
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {klass.__name__}: {sorted(bad)}")
            kwargs = dict(section)
            for key in tuple_keys:
                if key in kwargs and kwargs[key] is not None:
                    kwargs[key] = tuple(kwargs[key])
            try:
                return klass(**kwargs)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad {klass.__name__} section: {exc}") from exc

        cfg = cls()
        if "scene" in raw:
            scene_raw = dict(raw.pop("scene"))
            organism = build(OrganismConfig, scene_raw.pop("organism", None)) or OrganismConfig()
            nuclei = build(NucleiConfig, scene_raw.pop("nuclei", None))
            scene = build(
                SceneConfig, scene_raw, tuple_keys=("volume_dims", "spacing", "seed_weight_range")
            )
            scene.organism = organism
            scene.nuclei = nuclei
            cfg.scene = scene
        if "conditioning" in raw:
            cfg.conditioning = build(ConditioningConfig, raw.pop("conditioning"))
        if "render" in raw:
            cfg.render = build(RenderParams, raw.pop("render"), tuple_keys=("psf_sigma",))
        if "tiling" in raw:
            cfg.tiling = build(
                TilingConfig, raw.pop("tiling"), tuple_keys=("patch_dims", "d_overlap", "d_crop")
            )
        for key in ("n_samples", "master_seed", "output_dir", "file_format"):
            if key in raw:
                setattr(cfg, key, raw.pop(key))
        return cfg

    def to_yaml(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))
        return path

    @classmethod
    def from_yaml(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"top level of {path} must be a mapping")
        return cls.from_dict(raw)
