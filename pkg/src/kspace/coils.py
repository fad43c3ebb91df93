# Coil handling. Coil maps are (..., ncoils, H, W), images are (..., H, W)
# apply_coils and combine_coils are adjoint to each other, and combine(apply(x)) == x wherever sum |C|^2 == 1

from __future__ import annotations
import torch
from torch import Tensor

def _check_shapes(image_hw: torch.Size, coils: Tensor):
    if coils.ndim < 3:
        raise ValueError(f"Coil maps must have shape (..., ncoils, H, W), got {tuple(coils.shape)}")
    if tuple(image_hw) != tuple(coils.shape[-2:]):
        raise ValueError(f"Shape mismatch: image grid {tuple(image_hw)} vs coil grid {tuple(coils.shape[-2:])}")

def apply_coils(x: Tensor, coils: Tensor) -> Tensor:
    """Single-coil image (..., H, W) -> multi-coil images (..., ncoils, H, W), i.e. C_c * x"""
    _check_shapes(x.shape[-2:], coils)
    return x.unsqueeze(-3) * coils

def combine_coils(y: Tensor, coils: Tensor) -> Tensor:
    """Multi-coil images (..., ncoils, H, W) -> single-coil image, i.e. sum_c conj(C_c) * y_c"""
    _check_shapes(y.shape[-2:], coils)
    if y.ndim < 3 or y.size(-3) != coils.size(-3):
        raise ValueError(f"Coil count mismatch: data {tuple(y.shape)} vs coils {tuple(coils.shape)}")
    return (coils.conj() * y).sum(dim=-3)

def sum_of_squares(coils: Tensor) -> Tensor:
    return coils.abs().square().sum(dim=-3)

def normalize_coils(coils: Tensor, support: Tensor | None = None, eps: float = 1e-12) -> Tensor:
    """Scales the maps so that sum_c |C_c|^2 == 1 inside the support. Outside the support the maps are zeroed."""
    rss = sum_of_squares(coils).sqrt()
    inside = rss > eps
    if support is not None:
        inside = inside & support.bool()
    scale = torch.where(inside, 1 / torch.where(inside, rss, torch.ones_like(rss)), torch.zeros_like(rss))
    return coils * scale.unsqueeze(-3)
