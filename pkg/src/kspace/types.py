## Domain types for images, k-space, masks and coil maps
## These are interface objects: the heavy lifting happens on plain tensors (see fourier.py, coils.py, ops.py)
## and the wrappers exist so that every object crossing a module boundary has had its invariants checked

from __future__ import annotations
import math
import torch
from torch import Tensor
from dataclasses import dataclass, field
from typing import final
from .fourier import check_finite
from .coils import sum_of_squares

ACCELERATION_TOLERANCE = 0.15
COIL_NORM_TOLERANCE = 1e-6

def _check_hw(h: int, w: int):
    if h < 8 or w < 8 or h % 2 or w % 2:
        raise ValueError(f"Grid must be at least 8x8 with even sides, got {h}x{w}")


@dataclass(frozen=True, eq=False)
class ComplexImage:
    """A complex image of shape (H, W), or (ncoils, H, W) for per-coil images"""
    data: Tensor

    @final
    def sanity_check(self):
        if not self.data.is_complex():
            raise ValueError(f"ComplexImage needs complex data, got {self.data.dtype}")
        if self.data.ndim not in (2, 3):
            raise ValueError(f"ComplexImage must be (H, W) or (ncoils, H, W), got {tuple(self.data.shape)}")
        _check_hw(*self.shape)
        check_finite(self.data, "ComplexImage")

    def __post_init__(self):
        self.sanity_check()

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.data.shape[-2:])

    @property
    def magnitude(self) -> Tensor:
        return self.data.abs()

    def numpy(self):
        return self.data.detach().cpu().numpy()


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """A binary k-space sampling pattern.

    grid: (H, W) float tensor of zeros and ones
    acs_region: (row_start, row_stop, col_start, col_stop) of the always-sampled center block, or None
    acceleration: nominal acceleration R. The achieved H*W/count must be within 15% of it."""
    grid: Tensor
    acs_region: tuple[int, int, int, int] | None
    acceleration: float

    @final
    def sanity_check(self):
        if self.grid.ndim != 2:
            raise ValueError(f"Mask grid must be 2D, got shape {tuple(self.grid.shape)}")
        if not torch.all((self.grid == 0) | (self.grid == 1)):
            raise ValueError("Mask entries must be 0 or 1")
        if self.acs_region is not None:
            r0, r1, c0, c1 = self.acs_region
            if not (0 <= r0 <= r1 <= self.grid.size(0) and 0 <= c0 <= c1 <= self.grid.size(1)):
                raise ValueError(f"ACS region {self.acs_region} outside grid {tuple(self.grid.shape)}")
            if not torch.all(self.grid[r0:r1, c0:c1] == 1):
                raise ValueError("ACS region must be fully sampled")
        if self.acceleration < 1:
            raise ValueError(f"Acceleration must be at least 1, got {self.acceleration}")
        achieved = self.achieved_acceleration
        if math.isinf(achieved) or math.isinf(self.acceleration):
            if achieved != self.acceleration:
                raise ValueError(f"Achieved acceleration {achieved} does not match nominal {self.acceleration}")
        elif abs(achieved - self.acceleration) > ACCELERATION_TOLERANCE * self.acceleration:
            raise ValueError(f"Achieved acceleration {achieved:.3f} is not within 15% of nominal {self.acceleration}")

    def __post_init__(self):
        self.sanity_check()

    @classmethod
    def from_grid(cls, grid: Tensor, acs_region: tuple[int, int, int, int] | None = None) -> SamplingMask:
        """Wraps an arbitrary binary grid, taking the nominal acceleration to be the achieved one"""
        grid = grid.to(torch.float32)
        count = int(grid.sum().item())
        acceleration = grid.numel() / count if count > 0 else math.inf
        return cls(grid, acs_region, acceleration)

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.grid.shape)

    @property
    def num_sampled(self) -> int:
        return int(self.grid.sum().item())

    @property
    def achieved_acceleration(self) -> float:
        n = self.num_sampled
        return self.grid.numel() / n if n > 0 else math.inf

    @property
    def acs_grid(self) -> Tensor:
        """A (H, W) float tensor that is one exactly on the ACS block"""
        acs = torch.zeros_like(self.grid)
        if self.acs_region is not None:
            r0, r1, c0, c1 = self.acs_region
            acs[r0:r1, c0:c1] = 1
        return acs


@dataclass(frozen=True, eq=False)
class CoilSensitivities:
    """Complex coil maps of shape (ncoils, H, W) with sum_c |C_c|^2 == 1 inside the object support"""
    maps: Tensor
    support: Tensor | None = field(default=None)

    @final
    def sanity_check(self):
        if not self.maps.is_complex() or self.maps.ndim != 3:
            raise ValueError(f"Coil maps must be complex (ncoils, H, W), got {self.maps.dtype} {tuple(self.maps.shape)}")
        check_finite(self.maps, "CoilSensitivities")
        support = self.support_grid
        residual = (sum_of_squares(self.maps.to(torch.complex128)) - 1).abs()[support]
        if residual.numel() and residual.max().item() > COIL_NORM_TOLERANCE:
            raise ValueError(f"Coil maps are not normalized: max |sum |C|^2 - 1| = {residual.max().item():.3e}")

    def __post_init__(self):
        self.sanity_check()

    @property
    def ncoils(self) -> int:
        return self.maps.size(0)

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.maps.shape[-2:])

    @property
    def support_grid(self) -> Tensor:
        if self.support is None:
            return torch.ones(self.shape, dtype=torch.bool, device=self.maps.device)
        return self.support.bool()


@dataclass(frozen=True, eq=False)
class KSpaceData:
    """Multi-coil k-space (ncoils, H, W) together with the mask it was acquired under. Zero outside the mask."""
    data: Tensor
    mask: SamplingMask

    @final
    def sanity_check(self):
        if not self.data.is_complex() or self.data.ndim != 3:
            raise ValueError(f"k-space must be complex (ncoils, H, W), got {self.data.dtype} {tuple(self.data.shape)}")
        if tuple(self.data.shape[-2:]) != self.mask.shape:
            raise ValueError(f"Shape mismatch: k-space {tuple(self.data.shape[-2:])} vs mask {self.mask.shape}")
        check_finite(self.data, "KSpaceData")
        outside = self.data[:, self.mask.grid.to(self.data.device) == 0]
        if outside.numel() and torch.any(outside != 0):
            raise ValueError("k-space has nonzero entries outside its sampling mask")

    def __post_init__(self):
        self.sanity_check()

    @property
    def ncoils(self) -> int:
        return self.data.size(0)

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.data.shape[-2:])
