# Centered, orthonormal Fourier transforms over the last two axes
# Image  ->  ifftshift  ->  fft2  ->  fftshift  ->  k-space
# Leading axes (batch, coil) are carried along untouched

from __future__ import annotations
import torch
from torch import Tensor

def check_finite(x: Tensor, name: str = "input"):
    if not torch.isfinite(torch.view_as_real(x) if x.is_complex() else x).all():
        raise ValueError(f"{name} contains NaN or Inf entries")

def _check_grid(x: Tensor):
    if x.ndim < 2:
        raise ValueError(f"Expected at least a 2D grid, got shape {tuple(x.shape)}")

def fft2c(x: Tensor) -> Tensor:
    """Centered orthonormal 2D FFT over the last two axes. Real input is promoted to complex."""
    _check_grid(x)
    check_finite(x)
    x = torch.fft.ifftshift(x, dim=(-2, -1))
    x = torch.fft.fft2(x, dim=(-2, -1), norm="ortho")
    return torch.fft.fftshift(x, dim=(-2, -1))

def ifft2c(k: Tensor) -> Tensor:
    """Exact inverse of fft2c"""
    _check_grid(k)
    check_finite(k)
    k = torch.fft.ifftshift(k, dim=(-2, -1))
    k = torch.fft.ifft2(k, dim=(-2, -1), norm="ortho")
    return torch.fft.fftshift(k, dim=(-2, -1))

def complex_to_channels(x: Tensor) -> Tensor:
    """(..., H, W) complex -> (..., 2, H, W) real with channels (real, imag)"""
    return torch.view_as_real(x).movedim(-1, -3).contiguous()

def channels_to_complex(x: Tensor) -> Tensor:
    """(..., 2, H, W) real -> (..., H, W) complex"""
    if x.ndim < 3 or x.size(-3) != 2:
        raise ValueError(f"Expected a 2-channel (real, imag) tensor, got shape {tuple(x.shape)}")
    return torch.complex(x.select(-3, 0), x.select(-3, 1))
