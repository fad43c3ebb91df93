# Command line front end: simulate -> train -> reconstruct -> evaluate
# Exit codes: 0 success, 1 usage or configuration error, 2 any other failure

from __future__ import annotations
import os
import sys
import json
import argparse
import logging
import warnings
from dataclasses import asdict
import torch
from .config import RunConfig, ConfigError, apply_overrides
from .analysis.metrics import evaluate_slice
from .analysis.report import MetricReport
from .data.dataset import SliceDataset, build_dataset, load_manifest, load_slice, load_mask
from .data.rawio import write_array, read_array, InvalidDatasetError
from .diffusion.sampling import multipath_reconstruct
from .diffusion.schedule import ScheduleConfig
from .display import save_reconstruction_figures
from .kspace.ops import zero_fill, forward_model
from .model.checkpoint import load_checkpoint
from .model.lhan import count_parameters
from .training.trainer import train, TrainResult
from .util import configure_logging, apply_thread_cap, file_sha256, resolve_device

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
RECON_MANIFEST = "manifest.json"

class UsageError(Exception):
    pass

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)

def train_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, "train")

def recon_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, "recon")

def eval_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, "eval")


def cmd_simulate(cfg: RunConfig, force: bool = False) -> str:
    d = cfg.data
    build_dataset(d.n_train, d.n_val, d.n_test, d.shape, d.seed, d.root, d.n_coils, d.accelerations, d.acs_lines, force=force)
    return d.root

def cmd_train(cfg: RunConfig, resume: bool = False, verbose: bool = True) -> TrainResult:
    manifest = load_manifest(cfg.data.root)
    train_set = SliceDataset(manifest, "train", cfg.train.acceleration)
    val_set = SliceDataset(manifest, "val", cfg.train.acceleration)
    out = train_dir(cfg)
    os.makedirs(out, exist_ok=True)
    cfg.to_json(os.path.join(out, "config.json"))
    result = train(train_set, out, cfg.train, cfg.model, cfg.schedule, cfg.loss, val_set, cfg.inference, resume=resume, verbose=verbose)
    logger.info(f"Training finished at step {result.steps}, best validation PSNR {result.best_psnr}")
    return result

def cmd_reconstruct(
    cfg: RunConfig,
    checkpoint: str | None = None,
    slice_ids: list[str] | None = None,
    split: str = "test",
    verbose: bool = True,
) -> str:
    """Reconstructs the requested slices and writes per-slice mean / std arrays, optional per-path arrays,
    PNG figures and a manifest listing everything needed to re-run"""
    checkpoint = checkpoint or os.path.join(train_dir(cfg), "best.pt")
    device = resolve_device(cfg.inference.device)
    ckpt = load_checkpoint(checkpoint, cfg.model, device)
    stored = ckpt.header.get("schedule") or {}
    schedule_cfg = ScheduleConfig(**stored) if stored else cfg.schedule
    if stored and schedule_cfg != cfg.schedule:
        logger.warning(f"Using the schedule stored in the checkpoint ({stored}) instead of the configured one")
    sched = schedule_cfg.build()
    logger.info(f"Loaded {checkpoint} (step {ckpt.step}, {count_parameters(ckpt.model)} parameters)")

    manifest = load_manifest(cfg.data.root)
    dataset = SliceDataset(manifest, split, cfg.inference.acceleration, slice_ids)
    out = recon_dir(cfg)
    os.makedirs(out, exist_ok=True)
    inf = cfg.inference
    slices = []
    for s in dataset:
        result = multipath_reconstruct(s.y_u, s.mask, s.coils, ckpt.model, sched, inf.paths, inf.base_seed, inf, verbose=verbose)
        d = os.path.join(out, str(s.slice_id))
        write_array(os.path.join(d, "mean.raw"), result.mean.numpy(), "complex64")
        write_array(os.path.join(d, "std.raw"), result.std_map.numpy(), "float32")
        if inf.save_paths:
            for seed, p in zip(result.seeds, result.paths):
                write_array(os.path.join(d, f"path_{seed}.raw"), p.numpy(), "complex64")
        save_reconstruction_figures(d, result.mean, result.std_map, s.target, name=str(s.slice_id))
        slices.append({"slice_id": s.slice_id, **result.manifest()})

    bundle = {
        "checkpoint": os.path.abspath(checkpoint),
        "checkpoint_sha256": file_sha256(checkpoint),
        "checkpoint_step": ckpt.step,
        "dataset": manifest.root,
        "split": split,
        "acceleration": inf.acceleration,
        "acs_lines": manifest.acs_lines,
        "mask_seed": manifest.seed,
        "inference": asdict(inf),
        "schedule": asdict(schedule_cfg),
        "slices": slices,
    }
    with open(os.path.join(out, RECON_MANIFEST), "w") as f:
        json.dump(bundle, f, indent=2)
    return out

def cmd_evaluate(cfg: RunConfig, recon: str | None = None) -> MetricReport:
    """Scores a reconstruction bundle against the ground truth, with the zero-filled baseline alongside"""
    recon = recon or recon_dir(cfg)
    path = os.path.join(recon, RECON_MANIFEST)
    if not os.path.isfile(path):
        raise InvalidDatasetError(f"No reconstruction manifest in {recon}")
    with open(path) as f:
        bundle = json.load(f)
    manifest = load_manifest(cfg.data.root)
    h, w = manifest.shape
    report = MetricReport()
    fg = cfg.eval.foreground_fraction
    for entry in bundle["slices"]:
        sid = entry["slice_id"]
        mean = torch.from_numpy(read_array(os.path.join(recon, sid, "mean.raw"), (h, w)))
        std = torch.from_numpy(read_array(os.path.join(recon, sid, "std.raw"), (h, w)))
        try:
            target, coils = load_slice(manifest, sid)
        except InvalidDatasetError as e:
            msg = f"No ground truth for {sid} ({e}), skipping its metrics"
            warnings.warn(msg)
            logger.warning(msg)
            continue
        std_map = std if entry["n_paths"] > 1 else None
        report.add("dmsm", sid, evaluate_slice(mean, target.data, std_map, fg))
        if cfg.eval.baseline:
            mask = load_mask(manifest, sid, bundle["acceleration"])
            y_u = forward_model(target.data, coils.maps) * mask.grid
            report.add("zero_filled", sid, evaluate_slice(zero_fill(y_u, coils.maps), target.data))
    if not report.rows:
        raise InvalidDatasetError("Nothing to evaluate: no slice has ground truth")
    out = eval_dir(cfg)
    os.makedirs(out, exist_ok=True)
    report.to_json(os.path.join(out, "report.json"))
    report.to_csv(os.path.join(out, "report.csv"))
    table = report.table()
    with open(os.path.join(out, "table.txt"), "w") as f:
        f.write(table + "\n")
    print(table)
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="python -m src", description="Self-supervised multi-path diffusion MRI reconstruction")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="Override a config entry, e.g. train.steps=10")
    common.add_argument("--seed", type=int, help="Seed of this command (dataset, training or sampling seed)")
    common.add_argument("--log-file", help="Also write the log to this file")
    common.add_argument("--quiet", action="store_true", help="No progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Build the phantom dataset")
    p.add_argument("--force", action="store_true", help="Overwrite an existing dataset")

    p = sub.add_parser("train", parents=[common], help="Train the reconstruction model")
    p.add_argument("--mode", choices=["self_supervised", "supervised"])
    p.add_argument("--resume", action="store_true", help="Continue from the last checkpoint")

    p = sub.add_parser("reconstruct", parents=[common], help="Multi-path reconstruction with uncertainty maps")
    p.add_argument("--checkpoint")
    p.add_argument("--paths", type=int, help="Number of paths (default 15)")
    p.add_argument("--slices", nargs="+", help="Slice ids (default: the whole split)")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])

    p = sub.add_parser("evaluate", parents=[common], help="Score reconstructions against the ground truth")
    p.add_argument("--recon-dir")
    return parser

def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = list(args.overrides)
    if args.seed is not None:
        key = {"simulate": "data.seed", "train": "train.seed", "reconstruct": "inference.base_seed"}.get(args.command)
        if key is not None:
            overrides.append(f"{key}={args.seed}")
    if getattr(args, "mode", None):
        overrides.append(f"train.mode={args.mode}")
    if getattr(args, "paths", None) is not None:
        overrides.append(f"inference.paths={args.paths}")
    return apply_overrides(cfg, overrides)

def run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    configure_logging(cfg.log_level, args.log_file)
    apply_thread_cap()
    verbose = not args.quiet
    match args.command:
        case "simulate":
            cmd_simulate(cfg, args.force)
        case "train":
            cmd_train(cfg, args.resume, verbose)
        case "reconstruct":
            cmd_reconstruct(cfg, args.checkpoint, args.slices, args.split, verbose)
        case "evaluate":
            cmd_evaluate(cfg, args.recon_dir)
    return EXIT_OK

def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return run(args)
    except (UsageError, ConfigError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"Command failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
