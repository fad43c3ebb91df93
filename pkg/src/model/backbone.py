# The reconstruction network R_theta = DC o x0_from_eps o LHAN
# The network predicts noise, the noise estimate is turned into a clean-image estimate, and the DC layer
# puts the measured k-space back. Both the image output and the noise estimate are returned so that the
# diffusion loss and the image/k-space consistency losses can be computed from one forward pass.

from __future__ import annotations
import torch
from torch import Tensor
from ..kspace.fourier import complex_to_channels, channels_to_complex
from ..kspace.ops import zero_fill
from ..diffusion.schedule import NoiseSchedule, x0_from_eps
from .lhan import LHAN
from .dc import dc_layer

def backbone_reconstruct(
    x_t: Tensor,
    y: Tensor,
    mask: Tensor,
    coils: Tensor,
    t: Tensor | int,
    model: LHAN,
    sched: NoiseSchedule,
    condition: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """Runs R_theta on a batch.

    x_t: (B, 2, H, W) noisy image, y: (B, ncoils, H, W) k-space zero outside mask, mask: (B, H, W) or (H, W),
    coils: (B, ncoils, H, W) or (ncoils, H, W), t: int or (B,) time indices.
    condition: optional precomputed zero-filled image of y, (B, H, W) complex.
    Returns (x_r, eps_hat): the (B, H, W) complex reconstruction and the (B, 2, H, W) noise estimate."""
    if x_t.ndim != 4 or x_t.size(1) != 2:
        raise ValueError(f"x_t must be (B, 2, H, W), got {tuple(x_t.shape)}")
    if tuple(y.shape[-2:]) != tuple(x_t.shape[-2:]):
        raise ValueError(f"Shape mismatch: x_t {tuple(x_t.shape)} vs k-space {tuple(y.shape)}")
    if condition is None:
        condition = zero_fill(y, coils)
    cond = complex_to_channels(condition).to(x_t.dtype)
    eps_hat = model(torch.cat([x_t, cond], dim=1), t, sched.T)
    x0_hat = channels_to_complex(x0_from_eps(x_t, t, eps_hat, sched))
    if not model.config.use_dc:
        return x0_hat, eps_hat
    x0_hat = x0_hat.to(y.dtype)
    return dc_layer(x0_hat, y, mask, coils.to(y.dtype)), eps_hat
