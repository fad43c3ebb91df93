# Dual-domain self-supervised objective
# total = lambda_ic * L_IC + lambda_kc * L_KC + dm_multiplier * L_DM
# L_DM is the noise MSE averaged over the three branches, L_IC compares the three image reconstructions pairwise,
# L_KC compares each branch's k-space with the acquired k-space on the sampled locations only.

from __future__ import annotations
from dataclasses import dataclass
from typing import Literal
import torch
from torch import Tensor

Norm = Literal["l1", "l2"]
BRANCHES = ("full", "p1", "p2")

@dataclass
class LossWeights:
    lambda_ic: float = 1.0
    lambda_kc: float = 5.0
    dm_multiplier: float = 3.0
    norm: str = "l1"

    def __post_init__(self):
        if min(self.lambda_ic, self.lambda_kc, self.dm_multiplier) < 0:
            raise ValueError("Loss weights must be nonnegative")
        if self.norm not in ("l1", "l2"):
            raise ValueError(f"norm must be 'l1' or 'l2', got {self.norm}")


@dataclass
class BranchOutputs:
    """Per-branch outputs of R_theta. kspace holds F(C x_hat) over the full grid; the losses restrict it."""
    eps_hat: dict[str, Tensor]
    image: dict[str, Tensor]
    kspace: dict[str, Tensor]

    def __post_init__(self):
        for d in (self.eps_hat, self.image, self.kspace):
            if set(d) != set(BRANCHES):
                raise ValueError(f"Expected branches {BRANCHES}, got {tuple(d)}")
            shapes = {tuple(v.shape) for v in d.values()}
            if len(shapes) != 1:
                raise ValueError(f"Branch outputs have different shapes: {shapes}")


@dataclass
class LossBreakdown:
    l_dm: Tensor
    l_ic: Tensor
    l_kc: Tensor
    dm_term: Tensor
    ic_term: Tensor
    kc_term: Tensor
    total: Tensor

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.total).item())

    def to_record(self) -> dict[str, float]:
        return {
            "l_dm": float(self.l_dm.item()),
            "l_ic": float(self.l_ic.item()),
            "l_kc": float(self.l_kc.item()),
            "total": float(self.total.item()),
        }


def _distance(a: Tensor, b: Tensor, norm: Norm) -> Tensor:
    """Elementwise modulus of the difference (squared for l2). Works on real and complex tensors."""
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    d = (a - b).abs()
    return d if norm == "l1" else d.square()

def loss_dm(eps_true: Tensor, eps_hats: list[Tensor] | tuple[Tensor, ...]) -> Tensor:
    """Mean squared error between the true noise and each branch's estimate, averaged over branches"""
    if len(eps_hats) == 0:
        raise ValueError("Need at least one noise estimate")
    return torch.stack([_distance(e, eps_true, "l2").mean() for e in eps_hats]).mean()

def loss_ic(x_r: Tensor, x_p1: Tensor, x_p2: Tensor, norm: Norm = "l1") -> Tensor:
    return _distance(x_r, x_p1, norm).mean() + _distance(x_r, x_p2, norm).mean() + _distance(x_p1, x_p2, norm).mean()

def masked_mean(d: Tensor, mask: Tensor) -> Tensor:
    """Mean of d (..., ncoils, H, W) over the locations where mask (..., H, W) is one"""
    if tuple(mask.shape[-2:]) != tuple(d.shape[-2:]):
        raise ValueError(f"Mask mismatch: mask {tuple(mask.shape)} vs k-space {tuple(d.shape)}")
    m = mask.unsqueeze(-3).to(d.dtype).expand_as(d)
    return (d * m).sum() / m.sum().clamp_min(1)

def loss_kc(y_r: Tensor, y_p1: Tensor, y_p2: Tensor, y_u: Tensor, mask: Tensor, norm: Norm = "l1") -> Tensor:
    """Each branch's k-space against the acquired k-space, averaged over sampled locations only"""
    return sum(masked_mean(_distance(y, y_u, norm), mask) for y in (y_r, y_p1, y_p2))  # type: ignore

def combine_losses(l_dm: Tensor, l_ic: Tensor, l_kc: Tensor, weights: LossWeights) -> LossBreakdown:
    dm_term = weights.dm_multiplier * l_dm
    ic_term = weights.lambda_ic * l_ic
    kc_term = weights.lambda_kc * l_kc
    return LossBreakdown(l_dm, l_ic, l_kc, dm_term, ic_term, kc_term, ic_term + kc_term + dm_term)

def total_loss(
    branches: BranchOutputs,
    eps_true: Tensor,
    y_u: Tensor,
    mask: Tensor,
    weights: LossWeights,
    target_image: Tensor | None = None,
    target_kspace: Tensor | None = None,
) -> LossBreakdown:
    """The weighted objective and its components.

    With target_image / target_kspace given (fully supervised variant) the image and k-space terms compare each
    branch against the ground truth, over the whole k-space grid, instead of against each other and y_u."""
    norm: Norm = weights.norm  # type: ignore
    l_dm = loss_dm(eps_true, [branches.eps_hat[b] for b in BRANCHES])
    if target_image is None:
        l_ic = loss_ic(*(branches.image[b] for b in BRANCHES), norm=norm)
    else:
        l_ic = sum(_distance(branches.image[b], target_image, norm).mean() for b in BRANCHES)
    if target_kspace is None:
        l_kc = loss_kc(*(branches.kspace[b] for b in BRANCHES), y_u, mask, norm=norm)
    else:
        l_kc = sum(_distance(branches.kspace[b], target_kspace, norm).mean() for b in BRANCHES)
    return combine_losses(l_dm, l_ic, l_kc, weights)  # type: ignore
