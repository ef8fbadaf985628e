"""End-to-end services: dataset generation, quality sweeps, evaluation, scheduling.

Generation is deterministic from the master seed: sample ``i`` derives its
random streams from ``SeedSequence(master_seed, spawn_key=(i, k))`` (k = 0
for the scene, k = 1 for the renderer), so datasets are byte-identical
across runs and samples are independent of each other's presence.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as vio
from . import report
from .augment import AdaController, controller_step, estimate_r_ada
from .conditioning import positional_map, quality_sweep
from .config import ConfigError, PipelineConfig
from .metrics import intensity_profile, intensity_spectrum, quality_report
from .render import ClassicalRenderer, RenderParams
from .scaffold import build_scene
from .shapes import random_sh_shape
from .tiling import plan_tiling, process_volume

__all__ = [
    "SampleRecord",
    "DatasetManifest",
    "generate_dataset",
    "generate_quality_sweep",
    "evaluate_pairs",
    "run_ada_scheduler",
]

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class SampleRecord:
    sample_id: str
    index: int
    seed: int
    files: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    status: str = "ok"
    error: str = None


@dataclass
class DatasetManifest:
    config: dict
    samples: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for s in self.samples if s.status != "ok")

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "samples": [
                {
                    "sample_id": s.sample_id,
                    "index": s.index,
                    "seed": s.seed,
                    "files": s.files,
                    "stats": s.stats,
                    "status": s.status,
                    "error": s.error,
                }
                for s in self.samples
            ],
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        raw = json.loads(Path(path).read_text())
        manifest = cls(config=raw["config"])
        for s in raw["samples"]:
            manifest.samples.append(SampleRecord(**s))
        return manifest


def _sample_rngs(master_seed: int, index: int):
    scene_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(index, 0))
    )
    render_seed = int(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(index, 1)).generate_state(1)[0]
    )
    return scene_rng, render_seed


def _build_sample_scene(cfg: PipelineConfig, rng: np.random.Generator):
    scene_cfg = cfg.scene
    if scene_cfg.organism.kind == "sh":
        source = random_sh_shape(
            scene_cfg.organism.radius, scene_cfg.organism.gamma, scene_cfg.organism.l_max, rng
        )
    else:
        source = scene_cfg.organism.mask_path
    return build_scene(
        source,
        scene_cfg.volume_dims,
        (scene_cfg.cell_radius_mean, scene_cfg.cell_radius_sd),
        rng,
        spacing=scene_cfg.spacing,
        weight_range=scene_cfg.seed_weight_range,
        membrane_thickness=scene_cfg.membrane_thickness,
        nuclei_config=scene_cfg.nuclei,
    )


def _structure_mask(scene, structure: str):
    if structure == "nuclei":
        if scene.nuclei is None:
            raise ConfigError("scene has no nuclei but structure 'nuclei' was requested")
        return scene.nuclei
    return scene.membranes


def _ext(cfg: PipelineConfig) -> str:
    return "tif" if cfg.file_format == "tiff" else "raw"


def _save_annotations(scene, sample_dir: Path, cfg: PipelineConfig, files: dict):
    ext = _ext(cfg)
    fmt = cfg.file_format
    files["instances"] = str(vio.save_volume(sample_dir / f"instances.{ext}", scene.instances, fmt=fmt))
    files["membranes"] = str(vio.save_volume(sample_dir / f"membranes.{ext}", scene.membranes, fmt=fmt))
    files["foreground"] = str(vio.save_volume(sample_dir / f"foreground.{ext}", scene.foreground, fmt=fmt))
    if scene.nuclei is not None:
        files["nuclei"] = str(vio.save_volume(sample_dir / f"nuclei.{ext}", scene.nuclei, fmt=fmt))


def _render_full(structure, cond, cfg: PipelineConfig, render_seed: int):
    params_dict = {**cfg.render.__dict__}
    params_dict["rng_seed"] = render_seed
    renderer = ClassicalRenderer(RenderParams(**params_dict))
    plan = plan_tiling(
        cfg.scene.volume_dims,
        patch_dims=cfg.tiling.patch_dims,
        d_overlap=cfg.tiling.d_overlap,
        d_crop=cfg.tiling.d_crop,
    )
    return process_volume(structure, cond, renderer, plan, floor_epsilon=cfg.tiling.weight_floor)


def generate_dataset(cfg: PipelineConfig, output_dir=None) -> DatasetManifest:
    """Generate ``cfg.n_samples`` fully-annotated samples plus a manifest.

    Per-sample failures are recorded in the manifest instead of aborting
    the batch; the manifest is written even when samples fail.
    """
    cfg.validate()
    out_root = Path(output_dir if output_dir is not None else cfg.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    manifest = DatasetManifest(config=cfg.to_dict())
    for i in range(cfg.n_samples):
        sample_id = f"sample_{i:04d}"
        scene_rng, render_seed = _sample_rngs(cfg.master_seed, i)
        record = SampleRecord(sample_id=sample_id, index=i, seed=render_seed)
        sample_dir = out_root / sample_id
        try:
            scene = _build_sample_scene(cfg, scene_rng)
            cond = positional_map(
                scene.foreground, alpha=cfg.conditioning.alpha, beta=cfg.conditioning.beta
            )
            structure = _structure_mask(scene, cfg.scene.structure)
            image = _render_full(structure, cond, cfg, render_seed)

            sample_dir.mkdir(parents=True, exist_ok=True)
            ext = _ext(cfg)
            record.files["image"] = str(
                vio.save_volume(sample_dir / f"image.{ext}", image, fmt=cfg.file_format, kind="image")
            )
            record.files["conditioning"] = str(
                vio.save_volume(sample_dir / f"conditioning.{ext}", cond.map, fmt=cfg.file_format, kind="map")
            )
            _save_annotations(scene, sample_dir, cfg, record.files)
            record.stats = {
                "n_seeds": len(scene.seeds),
                "n_instances": int(len(scene.instances.labels())),
                "empty_instances": list(scene.metadata.get("empty_instances", [])),
                "structure_voxels": int(structure.data.astype(bool).sum()),
            }
        except Exception as exc:  # deliberate: batch continues past bad samples
            log.exception("sample %s failed", sample_id)
            record.status = "failed"
            record.error = f"{type(exc).__name__}: {exc}"
        manifest.samples.append(record)

    manifest.save(out_root / MANIFEST_NAME)
    return manifest


def generate_quality_sweep(cfg: PipelineConfig, alphas, output_dir=None) -> DatasetManifest:
    """Image variants over a conditioning sweep, sharing annotations.

    Every sample is built once; each alpha produces one rendered image
    (``image_alpha<value>``) against the same annotation files, so
    downstream comparisons isolate the conditioning effect.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ConfigError("sweep requires at least one alpha")
    if any(a <= 0 for a in alphas):
        raise ConfigError(f"sweep alphas must be positive, got {alphas!r}")
    cfg.validate()
    out_root = Path(output_dir if output_dir is not None else cfg.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    manifest = DatasetManifest(config={**cfg.to_dict(), "sweep_alphas": alphas})
    for i in range(cfg.n_samples):
        sample_id = f"sample_{i:04d}"
        scene_rng, render_seed = _sample_rngs(cfg.master_seed, i)
        record = SampleRecord(sample_id=sample_id, index=i, seed=render_seed)
        sample_dir = out_root / sample_id
        try:
            scene = _build_sample_scene(cfg, scene_rng)
            structure = _structure_mask(scene, cfg.scene.structure)
            maps = quality_sweep(scene.foreground, alphas, beta=cfg.conditioning.beta)
            sample_dir.mkdir(parents=True, exist_ok=True)
            ext = _ext(cfg)
            for alpha, cond in zip(alphas, maps):
                image = _render_full(structure, cond, cfg, render_seed)
                key = f"image_alpha{alpha:g}"
                record.files[key] = str(
                    vio.save_volume(sample_dir / f"{key}.{ext}", image, fmt=cfg.file_format, kind="image")
                )
            _save_annotations(scene, sample_dir, cfg, record.files)
            record.stats = {"n_seeds": len(scene.seeds), "alphas": alphas}
        except Exception as exc:
            log.exception("sweep sample %s failed", sample_id)
            record.status = "failed"
            record.error = f"{type(exc).__name__}: {exc}"
        manifest.samples.append(record)

    manifest.save(out_root / MANIFEST_NAME)
    return manifest


def evaluate_pairs(pairs, output_dir, ssim_window: int = 7) -> dict:
    """Score (reference, candidate) volume pairs and export figures.

    Writes ``report.csv`` (one delimited record per pair), ``summary.json``
    (aggregates), and per-pair profile and spectrum PNGs. Returns the
    summary dictionary. Pair failures are recorded and skipped.
    """
    out_root = Path(output_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    rows = []
    failures = []
    for pair_id, ref_path, cand_path in pairs:
        try:
            ref = vio.load_volume(ref_path)
            cand = vio.load_volume(cand_path)
            rep = quality_report(ref, cand, window=ssim_window)
            profile_png = report.save_profile_figure(
                out_root / f"profile_{pair_id}.png",
                {"reference": intensity_profile(ref), "candidate": intensity_profile(cand)},
                title=f"{pair_id}: depth-integrated profile",
            )
            spectrum_png = report.save_spectrum_figure(
                out_root / f"spectrum_{pair_id}.png",
                {"reference": intensity_spectrum(ref), "candidate": intensity_spectrum(cand)},
                title=f"{pair_id}: central-slice spectrum",
            )
            rows.append(
                {
                    "pair_id": pair_id,
                    "reference": str(ref_path),
                    "candidate": str(cand_path),
                    "nrmse": rep.nrmse,
                    "ssim": rep.ssim,
                    "zncc": rep.zncc,
                    "profile_figure": str(profile_png),
                    "spectrum_figure": str(spectrum_png),
                }
            )
        except Exception as exc:
            log.exception("pair %s failed", pair_id)
            failures.append({"pair_id": pair_id, "error": f"{type(exc).__name__}: {exc}"})

    csv_path = out_root / "report.csv"
    fieldnames = [
        "pair_id", "reference", "candidate", "nrmse", "ssim", "zncc",
        "profile_figure", "spectrum_figure",
    ]
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)

    summary = {"n_pairs": len(rows), "n_failed": len(failures), "failures": failures, "metrics": {}}
    for key in ("nrmse", "ssim", "zncc"):
        vals = np.array([r[key] for r in rows], dtype=float)
        if vals.size:
            summary["metrics"][key] = {
                "mean": float(vals.mean()),
                "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                "min": float(vals.min()),
                "max": float(vals.max()),
            }
    (out_root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_ada_scheduler(
    lines,
    out,
    err,
    p_start: float = 0.0,
    target: float = 0.6,
    step: float = 0.05,
    period: int = 1,
) -> AdaController:
    """Feed newline-delimited discriminator outputs through the controller.

    Each input line is one epoch's scalar output on real data; every
    ``period`` epochs the mean sign of the window is fed to the controller
    and the updated augmentation probability is emitted. Malformed lines
    are reported on ``err`` and skipped; an empty stream produces no
    output.
    """
    ctrl = AdaController(p_aug=p_start, target=target, step=step, period=period)
    window = []
    epoch = 0
    for raw in lines:
        text = raw.strip()
        if not text:
            continue
        try:
            value = float(text)
        except ValueError:
            err.write(f"ignoring malformed value {text!r}\n")
            continue
        window.append(value)
        epoch += 1
        if epoch % period == 0:
            ctrl = controller_step(ctrl, estimate_r_ada(window), epoch)
            out.write(f"{ctrl.p_aug:.6f}\n")
            window = []
    return ctrl
