from __future__ import annotations
from torch import Tensor
from ..kspace.fourier import fft2c, ifft2c
from ..kspace.coils import apply_coils, combine_coils

def dc_layer(x: Tensor, y_ref: Tensor, mask: Tensor, coils: Tensor) -> Tensor:
    """Data consistency: sampled k-space locations are replaced by the measurements, unsampled ones are kept
    from the current estimate.

    x: (..., H, W) complex image, y_ref: (..., ncoils, H, W) k-space, zero outside mask
    mask: (..., H, W) binary, coils: (..., ncoils, H, W)
    For a single coil this is an exact projection. With several coils it is the usual SENSE-combined replacement."""
    if tuple(mask.shape[-2:]) != tuple(x.shape[-2:]) or tuple(y_ref.shape[-2:]) != tuple(x.shape[-2:]):
        raise ValueError(f"Shape mismatch: image {tuple(x.shape)}, k-space {tuple(y_ref.shape)}, mask {tuple(mask.shape)}")
    m = mask.unsqueeze(-3).to(dtype=x.real.dtype)
    k = fft2c(apply_coils(x, coils))
    k = k * (1 - m) + y_ref * m
    return combine_coils(ifft2c(k), coils)
