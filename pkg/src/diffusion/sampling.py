# Reverse diffusion with data consistency, run along several independent noise paths
# Each step perturbs the measurements with low-level noise at the current noise level, reconstructs with the backbone
# and moves to the previous time index. The paths are reduced into a mean image and a magnitude std (uncertainty) map.

from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any
import pandas as pd
import torch
from torch import Tensor
from tqdm.auto import tqdm
from ..kspace.types import ComplexImage
from ..kspace.fourier import complex_to_channels, channels_to_complex
from ..kspace.ops import zero_fill, forward_model
from ..model.lhan import LHAN
from ..model.backbone import backbone_reconstruct
from ..analysis.metrics import psnr, pcc, foreground_mask, magnitude
from ..util import make_generator, num_threads
from .schedule import NoiseSchedule, posterior_step_mean_variance

logger = logging.getLogger(__name__)

DEFAULT_PATHS = 15

@dataclass
class InferenceConfig:
    """How reconstructions are sampled.

    measurement_noise: variance of each real/imaginary channel of the low-level measurement noise
    clean_measurements: use the acquired k-space unperturbed at every step
    noise_per_path: draw the measurement noise once per path instead of at every step
    stride: take every stride-th time index (1 runs the full chain)
    step_rule: "direct" takes the backbone reconstruction itself as the mean of x_{t-1},
        "posterior" mixes it with x_t through the DDPM posterior mean coefficients"""
    paths: int = DEFAULT_PATHS
    base_seed: int = 0
    acceleration: float = 4.0
    measurement_noise: float = 0.1
    clean_measurements: bool = False
    noise_per_path: bool = False
    stride: int = 1
    step_rule: str = "direct"
    save_paths: bool = False
    workers: int | None = None
    device: str = "auto"

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError(f"Need at least one path, got {self.paths}")
        if self.measurement_noise < 0:
            raise ValueError(f"measurement_noise must be nonnegative, got {self.measurement_noise}")
        if self.stride < 1:
            raise ValueError(f"stride must be at least 1, got {self.stride}")
        if self.step_rule not in ("posterior", "direct"):
            raise ValueError(f"Unknown step rule {self.step_rule}")
        if self.workers is not None and self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")


def timesteps(T: int, stride: int = 1) -> list[int]:
    """Descending time indices T, T - stride, ..., always ending at 1"""
    ts = list(range(T, 0, -stride))
    if ts[-1] != 1:
        ts.append(1)
    return ts

def low_noise(shape: tuple[int, ...], variance: float, generator: torch.Generator, device: str | torch.device = "cpu") -> Tensor:
    """Complex Gaussian noise whose real and imaginary parts each have the given variance"""
    re = torch.randn(shape, generator=generator, dtype=torch.float32)
    im = torch.randn(shape, generator=generator, dtype=torch.float32)
    return (variance ** 0.5 * torch.complex(re, im)).to(device)

def perturbed_measurements(x_u: Tensor, mask: Tensor, coils: Tensor, t: int, sched: NoiseSchedule, eps_low: Tensor) -> Tensor:
    """F(C (sqrt(alpha_bar_t) x_u + sqrt(1 - alpha_bar_t) eps_low)) restricted to the acquisition mask"""
    a = sched.alpha_bar[t - 1].item()
    x = a ** 0.5 * x_u + (1 - a) ** 0.5 * eps_low.to(x_u.dtype)
    return forward_model(x, coils) * mask.unsqueeze(-3).to(x_u.real.dtype)

@torch.no_grad()
def reverse_step(
    x_t: Tensor,
    t: int,
    y_u: Tensor,
    mask: Tensor,
    coils: Tensor,
    model: LHAN,
    sched: NoiseSchedule,
    generator: torch.Generator,
    cfg: InferenceConfig | None = None,
    prev: int | None = None,
    eps_low: Tensor | None = None,
) -> Tensor:
    """One reverse step from t to prev (default t - 1). x_t: (B, 2, H, W), y_u: (B, ncoils, H, W).
    The measurement noise is drawn from `generator` before the step noise, unless eps_low is given."""
    cfg = cfg or InferenceConfig()
    sched.check_t(t)
    coefs, sigma = posterior_step_mean_variance(t, sched, prev)
    if cfg.clean_measurements:
        y = y_u
    else:
        x_u = zero_fill(y_u, coils)
        if eps_low is None:
            eps_low = low_noise(tuple(x_u.shape), cfg.measurement_noise, generator, x_u.device)
        y = perturbed_measurements(x_u, mask, coils, t, sched, eps_low)

    x0_hat, _ = backbone_reconstruct(x_t, y, mask, coils, t, model, sched)
    x0 = complex_to_channels(x0_hat).to(x_t.dtype)
    match cfg.step_rule:
        case "posterior":
            mean = coefs.x0_coef * x0 + coefs.xt_coef * x_t
        case _:
            mean = x0
    if sigma == 0:
        return mean
    z = torch.randn(tuple(x_t.shape), generator=generator, dtype=x_t.dtype).to(x_t.device)
    return mean + sigma * z

@torch.no_grad()
def sample_path(
    y_u: Tensor,
    mask: Tensor,
    coils: Tensor,
    model: LHAN,
    sched: NoiseSchedule,
    seed: int,
    cfg: InferenceConfig | None = None,
    verbose: bool = False,
) -> ComplexImage:
    """Runs a full reverse chain from x_T ~ N(0, I). y_u: (ncoils, H, W), mask: (H, W), coils: (ncoils, H, W)"""
    cfg = cfg or InferenceConfig()
    if y_u.ndim != 3 or mask.ndim != 2:
        raise ValueError(f"Expected unbatched (ncoils, H, W) k-space and (H, W) mask, got {tuple(y_u.shape)} and {tuple(mask.shape)}")
    device = next(model.parameters()).device
    y_u, mask, coils = y_u.unsqueeze(0).to(device), mask.unsqueeze(0).to(device), coils.unsqueeze(0).to(device)
    h, w = y_u.shape[-2:]

    g = make_generator(seed)
    x = torch.randn((1, 2, h, w), generator=g, dtype=torch.float32).to(device)
    eps_low = low_noise((1, h, w), cfg.measurement_noise, g, device) if cfg.noise_per_path else None

    model.eval()
    ts = timesteps(sched.T, cfg.stride)
    for i, t in enumerate(tqdm(ts, desc=f"Path {seed}", disable=not verbose, leave=False)):
        prev = ts[i + 1] if i + 1 < len(ts) else 0
        x = reverse_step(x, t, y_u, mask, coils, model, sched, g, cfg, prev=prev, eps_low=eps_low)
    return ComplexImage(channels_to_complex(x[0]).cpu())


def _sorted_sum(values: Tensor) -> Tensor:
    """Sum along the leading (path) axis after sorting, so the result does not depend on path order"""
    return torch.sort(values, dim=0).values.sum(dim=0)

def aggregate_paths(paths: list[Tensor]) -> tuple[Tensor, Tensor]:
    """Mean of the complex paths and population std of their magnitudes, both in double precision"""
    if len(paths) == 0:
        raise ValueError("Need at least one path")
    stack = torch.stack([p.to(torch.complex128) for p in paths])
    n = stack.size(0)
    mean = torch.complex(_sorted_sum(stack.real), _sorted_sum(stack.imag)) / n
    mags = stack.abs()
    mag_mean = _sorted_sum(mags) / n
    std = (_sorted_sum((mags - mag_mean).square()) / n).sqrt()
    return mean, std


@dataclass
class MultiPathResult:
    paths: list[Tensor]
    mean: Tensor
    std_map: Tensor
    seeds: list[int]
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("A multi-path result needs at least one path")
        if len(self.seeds) != len(self.paths):
            raise ValueError(f"{len(self.paths)} paths but {len(self.seeds)} seeds")
        if bool((self.std_map < 0).any()):
            raise ValueError("Uncertainty map must be nonnegative")

    @classmethod
    def from_paths(cls, paths: list[Tensor], seeds: list[int], info: dict[str, Any] | None = None) -> MultiPathResult:
        mean, std = aggregate_paths(paths)
        return cls(paths, mean, std, list(seeds), info or {})

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def prefix(self, n: int) -> MultiPathResult:
        """The result of the first n paths only"""
        if not 1 <= n <= self.n_paths:
            raise ValueError(f"Prefix length must be in 1..{self.n_paths}, got {n}")
        return MultiPathResult.from_paths(self.paths[:n], self.seeds[:n], self.info)

    def manifest(self) -> dict[str, Any]:
        return {"n_paths": self.n_paths, "seeds": self.seeds, **self.info}


def multipath_reconstruct(
    y_u: Tensor,
    mask: Tensor,
    coils: Tensor,
    model: LHAN,
    sched: NoiseSchedule,
    n_paths: int = DEFAULT_PATHS,
    base_seed: int = 0,
    cfg: InferenceConfig | None = None,
    verbose: bool = False,
) -> MultiPathResult:
    """Samples n_paths independent reconstructions with seeds base_seed .. base_seed + n_paths - 1.
    Paths may run concurrently (cfg.workers, else DMSM_NUM_THREADS); the reduction is independent of completion order."""
    if n_paths < 1:
        raise ValueError(f"Need at least one path, got {n_paths}")
    cfg = cfg or InferenceConfig()
    seeds = [base_seed + i for i in range(n_paths)]
    workers = min(cfg.workers or num_threads() or 1, n_paths)

    def run(seed: int) -> Tensor:
        return sample_path(y_u, mask, coils, model, sched, seed, cfg).data

    if workers == 1:
        paths = [run(s) for s in tqdm(seeds, desc="Sampling paths", disable=not verbose)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(tqdm(pool.map(run, seeds), total=n_paths, desc="Sampling paths", disable=not verbose))
    logger.debug(f"Sampled {n_paths} paths with {workers} workers")
    info = {
        "T": sched.T,
        "stride": cfg.stride,
        "step_rule": cfg.step_rule,
        "measurement_noise": cfg.measurement_noise,
        "clean_measurements": cfg.clean_measurements,
        "noise_per_path": cfg.noise_per_path,
    }
    return MultiPathResult.from_paths(paths, seeds, info)


def single_vs_multi_psnr(result: MultiPathResult, target: Tensor) -> tuple[float, float]:
    """(PSNR of the mean image, mean of the single-path PSNRs)"""
    multi = psnr(result.mean, target)
    singles = [psnr(p, target) for p in result.paths]
    return multi, sum(singles) / len(singles)

def path_count_study(
    y_u: Tensor,
    mask: Tensor,
    coils: Tensor,
    model: LHAN,
    sched: NoiseSchedule,
    target: Tensor,
    counts: tuple[int, ...] = (1, 5, 10, 15),
    base_seed: int = 0,
    cfg: InferenceConfig | None = None,
) -> pd.DataFrame:
    """PSNR of the mean and uncertainty/error PCC for several path counts, reusing one set of max(counts) paths"""
    if not counts or min(counts) < 1:
        raise ValueError(f"Path counts must be positive, got {counts}")
    full = multipath_reconstruct(y_u, mask, coils, model, sched, max(counts), base_seed, cfg)
    fg = foreground_mask(target)
    rows = []
    for n in counts:
        r = full.prefix(n)
        error = abs(magnitude(r.mean) - magnitude(target))
        try:
            corr = pcc(r.std_map, error, fg)
        except ValueError:
            corr = float("nan")
        rows.append({"n_paths": n, "psnr": psnr(r.mean, target), "pcc": corr})
    return pd.DataFrame(rows)
