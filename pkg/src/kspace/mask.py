# Variable-density sampling masks and the partition split used for self-supervision
from __future__ import annotations
import logging
import numpy as np
import torch
from torch import Tensor
from .types import SamplingMask, ACCELERATION_TOLERANCE

logger = logging.getLogger(__name__)

BISECTION_ITERATIONS = 40
MAX_DRAWS = 16

def acs_block(h: int, w: int, acs_lines: int) -> tuple[int, int, int, int] | None:
    """The centered acs_lines x acs_lines block, aligned with the DC sample at (h // 2, w // 2)"""
    if acs_lines < 0:
        raise ValueError(f"acs_lines must be nonnegative, got {acs_lines}")
    if acs_lines > min(h, w):
        raise ValueError(f"acs_lines={acs_lines} does not fit in a {h}x{w} grid")
    if acs_lines == 0:
        return None
    r0 = h // 2 - acs_lines // 2
    c0 = w // 2 - acs_lines // 2
    return (r0, r0 + acs_lines, c0, c0 + acs_lines)

def _squared_radius(h: int, w: int) -> np.ndarray:
    rows = np.arange(h) - h // 2
    cols = np.arange(w) - w // 2
    return rows[:, None] ** 2 + cols[None, :] ** 2

def gaussian_density(h: int, w: int, budget: float, acs: np.ndarray) -> np.ndarray:
    """Per-pixel sampling probabilities exp(-r^2 / 2 s^2) outside the ACS block, with s found by bisection
    such that the expected number of samples (ACS included) equals the budget."""
    r2 = _squared_radius(h, w)
    n_acs = acs.sum()
    outside = ~acs

    def expected(sigma: float) -> float:
        return n_acs + np.exp(-r2[outside] / (2 * sigma ** 2)).sum()

    lo, hi = 1e-3, 100.0 * max(h, w)
    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if expected(mid) < budget:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    p = np.exp(-r2 / (2 * sigma ** 2))
    p[acs] = 1.0
    return p

def generate_vd_mask(h: int, w: int, acceleration: float, acs_lines: int, seed: int) -> SamplingMask:
    """Center-weighted Bernoulli mask drawn from an isotropic 2D Gaussian density, with a fully sampled ACS block.
    Deterministic for a given seed. Draws are repeated (deterministically) until the achieved acceleration
    is within tolerance of the nominal one."""
    if acceleration < 1:
        raise ValueError(f"Acceleration must be at least 1, got {acceleration}")
    region = acs_block(h, w, acs_lines)
    if acceleration == 1:
        return SamplingMask(torch.ones((h, w), dtype=torch.float32), region, 1.0)

    acs = np.zeros((h, w), dtype=bool)
    if region is not None:
        r0, r1, c0, c1 = region
        acs[r0:r1, c0:c1] = True
    budget = h * w / acceleration
    if acs.sum() > budget:
        raise ValueError(f"Infeasible mask: {acs.sum()} ACS samples exceed the budget of {budget:.1f} at R={acceleration}")

    p = gaussian_density(h, w, budget, acs)
    rng = np.random.default_rng(seed)
    grid = None
    for attempt in range(MAX_DRAWS):
        grid = (rng.random((h, w)) < p) | acs
        count = grid.sum()
        if count > 0 and abs(h * w / count - acceleration) <= ACCELERATION_TOLERANCE * acceleration:
            break
        logger.debug(f"Mask draw {attempt} for seed {seed} missed the acceleration tolerance, redrawing")
    assert grid is not None
    return SamplingMask(torch.from_numpy(grid.astype(np.float32)), region, float(acceleration))

def partition_masks(mask: Tensor, acs: Tensor, rho: float, generator: torch.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Splits the sampled locations of `mask` into two partitions.

    Every sampled location goes to the first partition with probability rho and to the second otherwise.
    The ACS block is retained in both. Returns float masks (m1, m2) with the same shape as `mask`."""
    if not 0 < rho < 1:
        raise ValueError(f"Partition probability must be in (0, 1), got {rho}")
    if mask.shape != acs.shape:
        raise ValueError(f"Shape mismatch: mask {tuple(mask.shape)} vs acs {tuple(acs.shape)}")
    draw = torch.rand(mask.shape, generator=generator, dtype=torch.float64).to(mask.device)
    sampled = mask.bool()
    acs = acs.bool() & sampled
    selected = (draw < rho) & sampled
    m1 = selected | acs
    m2 = (sampled & ~selected) | acs
    return m1.to(mask.dtype), m2.to(mask.dtype)
