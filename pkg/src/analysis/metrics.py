# Image quality metrics on magnitude images, and the uncertainty/error correlation
# Every image metric accepts torch tensors (complex or real), numpy arrays or ComplexImage, and compares magnitudes.

from __future__ import annotations
import math
from dataclasses import dataclass, asdict
from typing import Any
import numpy as np
import torch
from scipy import stats
from skimage.metrics import structural_similarity
from ..kspace.types import ComplexImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
FOREGROUND_FRACTION = 0.05

def real_map(x: Any) -> np.ndarray:
    if isinstance(x, ComplexImage):
        x = x.data
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.abs(x).astype(np.float64)
    return x.astype(np.float64)

def magnitude(x: Any) -> np.ndarray:
    return np.abs(real_map(x))

def _pair(x: Any, ref: Any) -> tuple[np.ndarray, np.ndarray]:
    a, b = magnitude(x), magnitude(ref)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {a.shape} vs {b.shape}")
    return a, b

def _data_range(ref: np.ndarray, data_range: float | None) -> float:
    if data_range is None:
        data_range = float(ref.max())
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")
    return data_range

def psnr(x: Any, ref: Any, data_range: float | None = None) -> float:
    """10 log10(data_range^2 / MSE) in dB, data_range defaulting to the reference maximum.
    Identical inputs give math.inf, which reports treat as "perfect"."""
    a, b = _pair(x, ref)
    dr = _data_range(b, data_range)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(dr ** 2 / mse)

def ssim(x: Any, ref: Any, data_range: float | None = None, k1: float = 0.01, k2: float = 0.03, window: int = SSIM_WINDOW) -> float:
    """Gaussian-windowed SSIM (sigma 1.5, population statistics), averaged over windows"""
    a, b = _pair(x, ref)
    if a.ndim != 2:
        raise ValueError(f"SSIM expects a 2D image, got shape {a.shape}")
    if min(a.shape) < window:
        raise ValueError(f"Image {a.shape} is smaller than the {window}x{window} SSIM window")
    dr = _data_range(b, data_range)
    return float(structural_similarity(
        a, b,
        win_size=window,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=k1,
        K2=k2,
        data_range=dr,
    ))

def mae(x: Any, ref: Any) -> float:
    a, b = _pair(x, ref)
    return float(np.mean(np.abs(a - b)))

def foreground_mask(ref: Any, fraction: float = FOREGROUND_FRACTION) -> np.ndarray:
    m = magnitude(ref)
    return m > fraction * m.max()

def pcc(uncertainty_map: Any, error_map: Any, foreground: np.ndarray | None = None) -> float:
    """Pearson correlation over pixels, optionally restricted to a boolean foreground mask.
    Real maps are used as given, complex maps by magnitude."""
    u, e = real_map(uncertainty_map), real_map(error_map)
    if u.shape != e.shape:
        raise ValueError(f"Shape mismatch: {u.shape} vs {e.shape}")
    if foreground is not None:
        if foreground.shape != u.shape:
            raise ValueError(f"Foreground mask {foreground.shape} does not match maps {u.shape}")
        u, e = u[foreground], e[foreground]
    u, e = u.ravel(), e.ravel()
    if u.size < 2:
        raise ValueError("Need at least two pixels to correlate")
    if np.std(u) == 0 or np.std(e) == 0:
        raise ValueError("Correlation is undefined: one of the maps has zero variance")
    return float(stats.pearsonr(u, e).statistic)

def bootstrap_ci(values: Any, confidence: float = 0.95, n_resamples: int = 9999, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap confidence interval of the mean"""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("Need at least two values for a bootstrap interval")
    res = stats.bootstrap(
        (v,),
        np.mean,
        confidence_level=confidence,
        n_resamples=n_resamples,
        method="percentile",
        random_state=np.random.default_rng(seed),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


@dataclass
class SliceMetrics:
    psnr: float
    ssim: float
    mae: float
    pcc: float | None = None

    def to_dict(self) -> dict[str, float | None]:
        return asdict(self)

def evaluate_slice(
    recon: Any,
    ref: Any,
    std_map: Any | None = None,
    foreground_fraction: float | None = FOREGROUND_FRACTION,
) -> SliceMetrics:
    """All metrics of one reconstruction. PCC is computed between std_map and |recon| - |ref| when a std map is given
    and is None if either map is constant."""
    result = SliceMetrics(psnr(recon, ref), ssim(recon, ref), mae(recon, ref))
    if std_map is not None:
        a, b = _pair(recon, ref)
        fg = foreground_mask(b, foreground_fraction) if foreground_fraction is not None else None
        try:
            result.pcc = pcc(std_map, np.abs(a - b), fg)
        except ValueError:
            result.pcc = None
    return result
