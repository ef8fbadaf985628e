"""Synthetic 3D fluorescence microscopy volumes with paired annotations."""

from .augment import (
    AdaController,
    AugmentationOp,
    apply_augmentations,
    controller_step,
    default_augmentations,
    estimate_r_ada,
)
from .conditioning import ConditioningMap, neutral_map, positional_map, quality_sweep
from .config import (
    ConditioningConfig,
    ConfigError,
    NucleiConfig,
    OrganismConfig,
    PipelineConfig,
    SceneConfig,
    TilingConfig,
)
from .io import load_volume, save_volume
from .metrics import (
    QualityReport,
    SegEvalConfig,
    instance_iou,
    intensity_profile,
    intensity_spectrum,
    nrmse,
    quality_report,
    segmentation_scores,
    ssim,
    tolerant_iou,
    zncc,
)
from .pipeline import (
    DatasetManifest,
    SampleRecord,
    evaluate_pairs,
    generate_dataset,
    generate_quality_sweep,
    run_ada_scheduler,
)
from .render import ClassicalRenderer, Generator, IdentityGenerator, RenderParams, identity_check, render_patch
from .scaffold import (
    CellSeed,
    Scene,
    build_scene,
    extract_membranes,
    generate_organism_shape,
    place_cells_layerwise,
    weighted_tessellation,
)
from .shapes import (
    SHShape,
    ShapeModel,
    fibonacci_directions,
    fit_shape_model,
    random_sh_shape,
    rasterize_sh,
    sample_shape_model,
    sh_basis,
    sh_index,
    voxelize_boundary_points,
)
from .tiling import TilingPlan, concentric_weights, plan_tiling, process_volume, retained_region
from .volume import (
    LabelVolume,
    Point3,
    VoxelVolume,
    boundary_mask,
    boundary_voxels,
    dilate,
    euclidean_distance_transform,
)

__version__ = "0.1.0"

__all__ = [
    "AdaController",
    "AugmentationOp",
    "CellSeed",
    "ClassicalRenderer",
    "ConditioningConfig",
    "ConditioningMap",
    "ConfigError",
    "DatasetManifest",
    "Generator",
    "IdentityGenerator",
    "LabelVolume",
    "NucleiConfig",
    "OrganismConfig",
    "PipelineConfig",
    "Point3",
    "QualityReport",
    "RenderParams",
    "SHShape",
    "SampleRecord",
    "Scene",
    "SceneConfig",
    "SegEvalConfig",
    "ShapeModel",
    "TilingConfig",
    "TilingPlan",
    "VoxelVolume",
    "apply_augmentations",
    "boundary_mask",
    "boundary_voxels",
    "build_scene",
    "concentric_weights",
    "controller_step",
    "default_augmentations",
    "dilate",
    "estimate_r_ada",
    "euclidean_distance_transform",
    "evaluate_pairs",
    "extract_membranes",
    "fibonacci_directions",
    "fit_shape_model",
    "generate_dataset",
    "generate_organism_shape",
    "generate_quality_sweep",
    "identity_check",
    "instance_iou",
    "intensity_profile",
    "intensity_spectrum",
    "load_volume",
    "neutral_map",
    "nrmse",
    "place_cells_layerwise",
    "plan_tiling",
    "positional_map",
    "process_volume",
    "quality_report",
    "quality_sweep",
    "random_sh_shape",
    "rasterize_sh",
    "render_patch",
    "retained_region",
    "run_ada_scheduler",
    "sample_shape_model",
    "save_volume",
    "segmentation_scores",
    "sh_basis",
    "sh_index",
    "ssim",
    "tolerant_iou",
    "voxelize_boundary_points",
    "weighted_tessellation",
    "zncc",
]
