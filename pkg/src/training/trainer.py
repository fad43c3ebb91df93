# Self-supervised training over three weight-shared branches: the acquired k-space and its two partitions.
# The three branches go through the network as one batch, so they always read the same parameters.
# All randomness of step s comes from a generator seeded with (seed, s), and the slice order of epoch e from (seed, e),
# which makes a resumed run continue exactly where an uninterrupted one would be.

from __future__ import annotations
import os
import json
import math
import logging
from dataclasses import dataclass, field
from typing import Any
import torch
from torch import Tensor
from tqdm.auto import tqdm
from ..data.dataset import Sample, SliceDataset, stack_samples
from ..diffusion.schedule import NoiseSchedule, ScheduleConfig, forward_noise
from ..diffusion.sampling import InferenceConfig, multipath_reconstruct
from ..kspace.fourier import complex_to_channels
from ..kspace.mask import partition_masks
from ..kspace.ops import zero_fill, forward_model
from ..model.lhan import LHAN, ModelConfig, count_parameters, parameter_breakdown
from ..model.backbone import backbone_reconstruct
from ..model.checkpoint import save_checkpoint, load_checkpoint, CheckpointError
from ..analysis.metrics import psnr
from ..util import derive_seed, make_generator, resolve_device
from .losses import LossWeights, LossBreakdown, BranchOutputs, BRANCHES, total_loss

logger = logging.getLogger(__name__)

METRICS_LOG = "metrics.jsonl"
LAST_CHECKPOINT = "last.pt"
BEST_CHECKPOINT = "best.pt"

# Salts for derive_seed
_INIT_SALT, _ORDER_SALT, _STEP_SALT = 0, 1, 2

class TrainingDiverged(RuntimeError):
    pass

@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 1
    lr: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rho: float = 0.5
    acceleration: float = 4.0
    seed: int = 0
    mode: str = "self_supervised"
    grad_clip: float | None = 1.0
    max_nonfinite: int = 50
    val_every: int = 250
    val_paths: int = 5
    val_slices: int | None = None
    checkpoint_every: int = 250
    log_every: int = 50
    device: str = "auto"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError(f"Adam betas must lie in [0, 1), got {self.adam_beta1}, {self.adam_beta2}")
        if self.acceleration < 1:
            raise ValueError(f"acceleration must be at least 1, got {self.acceleration}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.mode not in ("self_supervised", "supervised"):
            raise ValueError(f"mode must be 'self_supervised' or 'supervised', got {self.mode}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError(f"grad_clip must be positive or null, got {self.grad_clip}")
        if min(self.max_nonfinite, self.val_every, self.val_paths, self.checkpoint_every, self.log_every) < 1:
            raise ValueError("max_nonfinite, val_every, val_paths, checkpoint_every and log_every must be positive")


@dataclass
class TrainResult:
    last_checkpoint: str
    best_checkpoint: str
    metrics_log: str
    steps: int
    history: list[dict[str, Any]] = field(default_factory=list)
    best_psnr: float | None = None


def make_optimizer(params, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps)

def _batched(x: Tensor, ndim: int) -> Tensor:
    return x if x.ndim == ndim else x.unsqueeze(0)

def compute_branches(
    sample: Sample,
    model: LHAN,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    generator: torch.Generator,
) -> tuple[BranchOutputs, Tensor]:
    """Draws one t and one noise image per slice, shared by the three branches, partitions the acquisition,
    and runs the backbone on all branches at once. Returns the branch outputs and the true noise."""
    device = next(model.parameters()).device
    y_u = _batched(sample.y_u, 4).to(device)
    mask = _batched(sample.mask, 3).to(device)
    acs = _batched(sample.acs, 3).to(device)
    coils = _batched(sample.coils, 4).to(device)
    b, _, h, w = y_u.shape

    # Draw order: t, noise, partition
    t = torch.randint(1, sched.T + 1, (b,), generator=generator).to(device)
    eps = torch.randn((b, 2, h, w), generator=generator, dtype=torch.float32).to(device)
    m1, m2 = partition_masks(mask, acs, cfg.rho, generator)
    m1, m2 = m1.to(device), m2.to(device)

    masks = torch.cat([mask, m1, m2])
    ys = y_u.repeat(3, 1, 1, 1) * masks.unsqueeze(1).to(y_u.real.dtype)
    coils3 = coils.repeat(3, 1, 1, 1)
    t3 = t.repeat(3)
    eps3 = eps.repeat(3, 1, 1, 1)

    x_u = zero_fill(ys, coils3)
    x_t = forward_noise(complex_to_channels(x_u).float(), t3, eps3, sched)
    images, eps_hat = backbone_reconstruct(x_t, ys, masks, coils3, t3, model, sched, condition=x_u)
    kspace = forward_model(images.to(coils3.dtype), coils3)

    split = lambda x: dict(zip(BRANCHES, x.chunk(3)))
    return BranchOutputs(eps_hat=split(eps_hat), image=split(images), kspace=split(kspace)), eps

def step_loss(
    sample: Sample,
    model: LHAN,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    weights: LossWeights,
    generator: torch.Generator,
) -> LossBreakdown:
    """The loss of one step without touching the parameters"""
    branches, eps = compute_branches(sample, model, sched, cfg, generator)
    device = eps.device
    y_u = _batched(sample.y_u, 4).to(device)
    mask = _batched(sample.mask, 3).to(device)
    if cfg.mode == "supervised":
        target = _batched(sample.target, 3).to(device)
        target_kspace = forward_model(target, _batched(sample.coils, 4).to(device))
        return total_loss(branches, eps, y_u, mask, weights, target_image=target, target_kspace=target_kspace)
    return total_loss(branches, eps, y_u, mask, weights)

def train_step(
    sample: Sample,
    model: LHAN,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    generator: torch.Generator,
    optimizer: torch.optim.Optimizer,
    weights: LossWeights | None = None,
) -> LossBreakdown:
    """One Adam update on the dual-domain loss. A non-finite loss leaves the model and optimizer untouched."""
    weights = weights or LossWeights()
    model.train()
    optimizer.zero_grad(set_to_none=True)
    breakdown = step_loss(sample, model, sched, cfg, weights, generator)
    if not breakdown.is_finite():
        logger.warning(f"Non-finite loss ({breakdown.to_record()}), skipping the update")
        return breakdown
    breakdown.total.backward()
    if cfg.grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    optimizer.step()
    return breakdown


def batch_indices(step: int, n: int, batch_size: int, seed: int) -> list[int]:
    """Dataset indices of the batch at (0-based) step. Each epoch visits every slice once in a seeded random order."""
    indices = []
    cache: dict[int, Tensor] = {}
    for pos in range(step * batch_size, (step + 1) * batch_size):
        epoch = pos // n
        if epoch not in cache:
            cache[epoch] = torch.randperm(n, generator=make_generator(derive_seed(seed, _ORDER_SALT, epoch)))
        indices.append(int(cache[epoch][pos % n]))
    return indices

def step_generator(seed: int, step: int) -> torch.Generator:
    return make_generator(derive_seed(seed, _STEP_SALT, step))

@torch.no_grad()
def validate(
    model: LHAN,
    sched: NoiseSchedule,
    dataset: SliceDataset,
    n_paths: int,
    seed: int = 0,
    max_slices: int | None = None,
    inference: InferenceConfig | None = None,
) -> dict[str, float]:
    """Mean PSNR of the n_paths mean reconstruction and of the zero-filled image over (a prefix of) the dataset"""
    model.eval()
    n = len(dataset) if max_slices is None else min(max_slices, len(dataset))
    if n == 0:
        raise ValueError("Validation set is empty")
    recon, baseline = [], []
    for i in range(n):
        s = dataset[i]
        result = multipath_reconstruct(s.y_u, s.mask, s.coils, model, sched, n_paths, seed, inference)
        recon.append(psnr(result.mean, s.target))
        baseline.append(psnr(zero_fill(s.y_u, s.coils), s.target))
    return {"psnr": sum(recon) / n, "zero_filled_psnr": sum(baseline) / n}


def _read_log(path: str, upto: int) -> list[dict[str, Any]]:
    if not os.path.isfile(path):
        return []
    with open(path) as f:
        records = [json.loads(line) for line in f if line.strip()]
    return [r for r in records if r["step"] <= upto]

def _write_log(path: str, records: list[dict[str, Any]]):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    os.replace(tmp, path)

def train(
    dataset: SliceDataset,
    out_dir: str,
    cfg: TrainConfig | None = None,
    model_config: ModelConfig | None = None,
    schedule_config: ScheduleConfig | None = None,
    weights: LossWeights | None = None,
    val_dataset: SliceDataset | None = None,
    inference: InferenceConfig | None = None,
    resume: bool = False,
    verbose: bool = True,
) -> TrainResult:
    """Trains from scratch (or resumes from out_dir/last.pt) and writes last.pt, best.pt and metrics.jsonl into out_dir.
    best.pt holds the model with the highest validation PSNR, or the last model if there is no validation set."""
    cfg = cfg or TrainConfig()
    model_config = model_config or ModelConfig()
    schedule_config = schedule_config or ScheduleConfig()
    weights = weights or LossWeights()
    if len(dataset) == 0:
        raise ValueError("Cannot train on an empty dataset")
    if cfg.mode == "supervised":
        logger.info("Training in the fully supervised mode")

    os.makedirs(out_dir, exist_ok=True)
    last_path = os.path.join(out_dir, LAST_CHECKPOINT)
    best_path = os.path.join(out_dir, BEST_CHECKPOINT)
    log_path = os.path.join(out_dir, METRICS_LOG)
    device = resolve_device(cfg.device)
    sched = schedule_config.build()
    schedule_header = {
        "T": schedule_config.T,
        "beta_start": schedule_config.beta_start,
        "beta_end": schedule_config.beta_end,
        "kind": schedule_config.kind,
    }

    torch.manual_seed(derive_seed(cfg.seed, _INIT_SALT))
    model = LHAN(model_config)
    start_step = 0
    best_psnr: float | None = None
    optimizer_state = None
    if resume and os.path.isfile(last_path):
        ckpt = load_checkpoint(last_path, model_config)
        if ckpt.header.get("schedule") != schedule_header:
            raise CheckpointError(f"{last_path} was trained with schedule {ckpt.header.get('schedule')}, not {schedule_header}")
        model = ckpt.model
        start_step = ckpt.step
        best_psnr = ckpt.extra.get("best_psnr")
        optimizer_state = ckpt.optimizer_state
        logger.info(f"Resuming from step {start_step}")
    elif resume:
        logger.warning(f"Nothing to resume in {out_dir}, starting from scratch")

    model.to(device)
    optimizer = make_optimizer(model.parameters(), cfg)
    if optimizer_state is not None:
        optimizer.load_state_dict(optimizer_state)
    logger.info(f"Model has {count_parameters(model)} parameters: {parameter_breakdown(model)}")

    history = _read_log(log_path, start_step)
    _write_log(log_path, history)

    def checkpoint(path: str, step: int):
        save_checkpoint(path, model, step, optimizer, schedule_header, {"best_psnr": best_psnr})

    nonfinite = 0
    with open(log_path, "a") as log:
        def record(r: dict[str, Any]):
            history.append(r)
            log.write(json.dumps(r) + "\n")
            log.flush()

        bar = tqdm(range(start_step, cfg.steps), desc="Training", disable=not verbose, initial=start_step, total=cfg.steps)
        for step in bar:
            idx = batch_indices(step, len(dataset), cfg.batch_size, cfg.seed)
            sample = stack_samples([dataset[i] for i in idx])
            breakdown = train_step(sample, model, sched, cfg, step_generator(cfg.seed, step), optimizer, weights)
            finite = breakdown.is_finite()
            values = breakdown.to_record()
            record({"step": step + 1, "kind": "train", **{k: (v if math.isfinite(v) else None) for k, v in values.items()}, "finite": finite})

            nonfinite = 0 if finite else nonfinite + 1
            if nonfinite >= cfg.max_nonfinite:
                checkpoint(last_path, step + 1)
                raise TrainingDiverged(f"{nonfinite} consecutive non-finite losses, aborting at step {step + 1}")
            if finite and (step + 1) % cfg.log_every == 0:
                logger.info(f"Step {step + 1}: " + ", ".join(f"{k}={v:.5f}" for k, v in values.items()))
            bar.set_postfix(loss=values["total"])

            done = step + 1 == cfg.steps
            if val_dataset is not None and len(val_dataset) > 0 and ((step + 1) % cfg.val_every == 0 or done):
                val = validate(model, sched, val_dataset, cfg.val_paths, cfg.seed, cfg.val_slices, inference)
                record({"step": step + 1, "kind": "val", **val})
                logger.info(f"Validation at step {step + 1}: PSNR {val['psnr']:.2f} dB (zero-filled {val['zero_filled_psnr']:.2f} dB)")
                if best_psnr is None or val["psnr"] > best_psnr:
                    best_psnr = val["psnr"]
                    checkpoint(best_path, step + 1)
            if (step + 1) % cfg.checkpoint_every == 0 or done:
                checkpoint(last_path, step + 1)

    if start_step >= cfg.steps and not os.path.isfile(last_path):
        checkpoint(last_path, start_step)
    if val_dataset is None or len(val_dataset) == 0 or not os.path.isfile(best_path):
        checkpoint(best_path, max(cfg.steps, start_step))
    return TrainResult(last_path, best_path, log_path, max(cfg.steps, start_step), history, best_psnr)
