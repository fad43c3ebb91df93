from __future__ import annotations
import torch
from torch import Tensor
from .types import ComplexImage, KSpaceData, SamplingMask, CoilSensitivities
from .fourier import fft2c, ifft2c
from .coils import apply_coils, combine_coils
from .mask import partition_masks
from ..util import make_generator

def zero_fill(y: Tensor, coils: Tensor) -> Tensor:
    """Tensor version of zero_fill_recon: (..., ncoils, H, W) k-space -> (..., H, W) image"""
    return combine_coils(ifft2c(y), coils)

def forward_model(x: Tensor, coils: Tensor) -> Tensor:
    """Image (..., H, W) -> fully sampled multi-coil k-space (..., ncoils, H, W)"""
    return fft2c(apply_coils(x, coils))

def undersample(y_full: KSpaceData | Tensor, mask: SamplingMask) -> KSpaceData:
    """Masks fully sampled k-space. The mask is stored alongside the data."""
    data = y_full.data if isinstance(y_full, KSpaceData) else y_full
    if tuple(data.shape[-2:]) != mask.shape:
        raise ValueError(f"Shape mismatch: k-space {tuple(data.shape[-2:])} vs mask {mask.shape}")
    return KSpaceData(data * mask.grid.to(device=data.device, dtype=data.real.dtype), mask)

def simulate_acquisition(image: ComplexImage, coils: CoilSensitivities, mask: SamplingMask) -> KSpaceData:
    """Fully sampled multi-coil k-space of a ground-truth image, undersampled under `mask`"""
    return undersample(forward_model(image.data, coils.maps.to(image.data.dtype)), mask)

def partition_kspace(y_u: KSpaceData, rho: float = 0.5, seed: int = 0) -> tuple[KSpaceData, KSpaceData, SamplingMask]:
    """Splits acquired k-space into two partitions y_p1 = M * y_u and y_p2 = (1 - M) * y_u.
    The ACS block of the acquisition mask is kept in both partitions. Returns (y_p1, y_p2, M)."""
    acq = y_u.mask
    m1, m2 = partition_masks(acq.grid, acq.acs_grid, rho, make_generator(seed))
    mask_p1 = SamplingMask.from_grid(m1, acq.acs_region)
    mask_p2 = SamplingMask.from_grid(m2, acq.acs_region)
    real = y_u.data.real.dtype
    p1 = KSpaceData(y_u.data * m1.to(device=y_u.data.device, dtype=real), mask_p1)
    p2 = KSpaceData(y_u.data * m2.to(device=y_u.data.device, dtype=real), mask_p2)
    return p1, p2, mask_p1

def zero_fill_recon(y: KSpaceData, coils: CoilSensitivities) -> ComplexImage:
    """The naive reconstruction: inverse FFT of the zero-filled k-space, coil-combined"""
    if y.shape != coils.shape or y.ncoils != coils.ncoils:
        raise ValueError(f"Shape mismatch: k-space {tuple(y.data.shape)} vs coils {tuple(coils.maps.shape)}")
    return ComplexImage(zero_fill(y.data, coils.maps.to(y.data.dtype)))
