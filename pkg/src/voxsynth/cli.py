"""Command-line entry point.

Subcommands: ``generate`` (dataset), ``sweep`` (conditioning-strength image
variants), ``evaluate`` (pairwise metrics, delimited report plus figures),
``ada-sched`` (stdin/stdout augmentation-probability service), ``inspect``
(manifest or volume summary). Exit codes: 0 success, 1 partial per-item
failures, 2 configuration or usage errors.

Relative output directories resolve beneath ``$VOXSYNTH_OUTPUT_ROOT`` when
that variable is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as vio
from .config import ConfigError, PipelineConfig
from .pipeline import (
    DatasetManifest,
    evaluate_pairs,
    generate_dataset,
    generate_quality_sweep,
    run_ada_scheduler,
)
from .volume import LabelVolume

OUTPUT_ROOT_ENV = "VOXSYNTH_OUTPUT_ROOT"


def _resolve_output(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_yaml(args.config) if args.config else PipelineConfig()
    if getattr(args, "samples", None) is not None:
        cfg.n_samples = args.samples
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "dims", None) is not None:
        cfg.scene.volume_dims = tuple(args.dims)
    if getattr(args, "structure", None) is not None:
        cfg.scene.structure = args.structure
    if getattr(args, "file_format", None) is not None:
        cfg.file_format = args.file_format
    if getattr(args, "alpha_cond", None) is not None:
        cfg.conditioning.alpha = args.alpha_cond
    if getattr(args, "output", None) is not None:
        cfg.output_dir = str(_resolve_output(args.output))
    else:
        cfg.output_dir = str(_resolve_output(cfg.output_dir))
    return cfg


def _add_generate_args(sub):
    sub.add_argument("--config", help="YAML pipeline configuration")
    sub.add_argument("--output", help="output directory (default from config)")
    sub.add_argument("--samples", type=int, help="number of samples")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--dims", type=int, nargs=3, metavar=("NX", "NY", "NZ"), help="volume dims")
    sub.add_argument("--structure", choices=("membranes", "nuclei"), help="rendered structure")
    sub.add_argument("--file-format", dest="file_format", choices=("tiff", "raw"))
    sub.add_argument("--alpha", dest="alpha_cond", type=float, help="conditioning alpha")


def _cmd_generate(args) -> int:
    cfg = _load_config(args)
    manifest = generate_dataset(cfg)
    ok = len(manifest.samples) - manifest.n_failed
    print(f"generated {ok}/{len(manifest.samples)} samples in {cfg.output_dir}")
    if manifest.n_failed:
        for rec in manifest.samples:
            if rec.status != "ok":
                print(f"  failed {rec.sample_id}: {rec.error}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    manifest = generate_quality_sweep(cfg, args.alphas)
    ok = len(manifest.samples) - manifest.n_failed
    print(
        f"swept alphas {args.alphas} over {ok}/{len(manifest.samples)} samples in {cfg.output_dir}"
    )
    if manifest.n_failed:
        for rec in manifest.samples:
            if rec.status != "ok":
                print(f"  failed {rec.sample_id}: {rec.error}", file=sys.stderr)
        return 1
    return 0


def _pairs_from_manifests(ref_manifest: str, cand_manifest: str, key: str):
    ref = DatasetManifest.load(ref_manifest)
    cand = DatasetManifest.load(cand_manifest)
    cand_by_id = {s.sample_id: s for s in cand.samples}
    pairs = []
    for s in ref.samples:
        other = cand_by_id.get(s.sample_id)
        if other is None or key not in s.files or key not in other.files:
            continue
        pairs.append((s.sample_id, s.files[key], other.files[key]))
    return pairs


def _cmd_evaluate(args) -> int:
    pairs = []
    for i, (ref, cand) in enumerate(args.pair or []):
        pairs.append((f"pair_{i:03d}", ref, cand))
    if args.manifest and args.against:
        pairs.extend(_pairs_from_manifests(args.manifest, args.against, args.image_key))
    if not pairs:
        print("no pairs to evaluate (use --pair or --manifest/--against)", file=sys.stderr)
        return 2
    summary = evaluate_pairs(pairs, _resolve_output(args.output))
    print(
        f"evaluated {summary['n_pairs']} pairs, report in {_resolve_output(args.output)}"
    )
    for key, stats in summary["metrics"].items():
        print(f"  {key}: mean {stats['mean']:.4f} (sd {stats['sd']:.4f})")
    return 1 if summary["n_failed"] else 0


def _cmd_ada_sched(args) -> int:
    run_ada_scheduler(
        sys.stdin,
        sys.stdout,
        sys.stderr,
        p_start=args.p_start,
        target=args.target,
        step=args.step,
        period=args.period,
    )
    return 0


def _cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        print(f"no such path: {path}", file=sys.stderr)
        return 2
    if path.suffix == ".json" or path.name == "manifest.json":
        manifest = DatasetManifest.load(path)
        print(f"manifest {path}")
        print(f"  samples: {len(manifest.samples)} ({manifest.n_failed} failed)")
        for rec in manifest.samples:
            status = rec.status if rec.status != "ok" else f"{len(rec.files)} files"
            print(f"  {rec.sample_id}: seed {rec.seed}, {status}")
        return 0
    vol = vio.load_volume(path)
    data = np.asarray(vol.data, dtype=np.float64)
    kind = "labels" if isinstance(vol, LabelVolume) else "scalar"
    print(f"volume {path}")
    print(f"  dims (x, y, z): {vol.dims}")
    print(f"  spacing: {vol.spacing}")
    print(f"  kind: {kind}")
    print(f"  min/mean/max: {data.min():.6g} / {data.mean():.6g} / {data.max():.6g}")
    if isinstance(vol, LabelVolume):
        print(f"  instances: {len(vol.labels())}")
    if vol.metadata:
        print(f"  metadata: {json.dumps(vol.metadata, sort_keys=True)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxsynth",
        description="Synthesize and evaluate annotated 3D fluorescence microscopy volumes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate an annotated dataset")
    _add_generate_args(gen)
    gen.set_defaults(func=_cmd_generate)

    sweep = sub.add_parser("sweep", help="render image variants over conditioning strengths")
    _add_generate_args(sweep)
    sweep.add_argument(
        "--alphas", type=float, nargs="+", default=[10.0, 100.0, 500.0],
        help="conditioning strengths to sweep",
    )
    sweep.set_defaults(func=_cmd_sweep)

    ev = sub.add_parser("evaluate", help="score volume pairs and export figures")
    ev.add_argument("--pair", nargs=2, action="append", metavar=("REF", "CAND"))
    ev.add_argument("--manifest", help="reference manifest for pairing by sample id")
    ev.add_argument("--against", help="candidate manifest for pairing by sample id")
    ev.add_argument("--image-key", default="image", help="manifest file key to compare")
    ev.add_argument("--output", default="evaluation", help="report directory")
    ev.set_defaults(func=_cmd_evaluate)

    ada = sub.add_parser("ada-sched", help="augmentation probability service on stdio")
    ada.add_argument("--p-start", type=float, default=0.0)
    ada.add_argument("--target", type=float, default=0.6)
    ada.add_argument("--step", type=float, default=0.05)
    ada.add_argument("--period", type=int, default=1)
    ada.set_defaults(func=_cmd_ada_sched)

    ins = sub.add_parser("inspect", help="summarize a manifest or volume file")
    ins.add_argument("path")
    ins.set_defaults(func=_cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
