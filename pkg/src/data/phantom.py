# Synthetic ground truth: randomized Shepp-Logan style phantoms and analytic coil sensitivity maps

from __future__ import annotations
import numpy as np
import torch
from ..kspace.types import ComplexImage, CoilSensitivities
from ..kspace.coils import normalize_coils

# (x0, y0, a, b, angle in degrees, intensity), the modified Shepp-Logan head in normalized [-1, 1] coordinates
SHEPP_LOGAN_ELLIPSES = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
)

def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    y, x = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    return x, y

def _ellipse_mask(x: np.ndarray, y: np.ndarray, x0: float, y0: float, a: float, b: float, angle_deg: float) -> np.ndarray:
    angle = np.deg2rad(angle_deg)
    xs, ys = x - x0, y - y0
    xr = np.cos(angle) * xs + np.sin(angle) * ys
    yr = -np.sin(angle) * xs + np.cos(angle) * ys
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0

def phantom_magnitude(h: int, w: int, seed: int | None = None) -> np.ndarray:
    """Magnitude of the (possibly randomized) phantom in [0, 1]. seed=None gives the canonical phantom."""
    x, y = _grid(h, w)
    rng = np.random.default_rng(seed) if seed is not None else None
    image = np.zeros((h, w), dtype=np.float64)
    for i, (x0, y0, a, b, angle, rho) in enumerate(SHEPP_LOGAN_ELLIPSES):
        if rng is not None and i > 1:
            # The skull (first two ellipses) stays fixed so the object support is stable across slices
            x0 += rng.uniform(-0.06, 0.06)
            y0 += rng.uniform(-0.06, 0.06)
            a *= rng.uniform(0.75, 1.3)
            b *= rng.uniform(0.75, 1.3)
            angle += rng.uniform(-25, 25)
            rho *= rng.uniform(0.5, 2.0)
        image[_ellipse_mask(x, y, x0, y0, a, b, angle)] += rho
    image = np.clip(image, 0, None)
    peak = image.max()
    return image / peak if peak > 0 else image

def smooth_phase(h: int, w: int, seed: int | None = None, max_phase: float = np.pi / 4) -> np.ndarray:
    """Low-order polynomial phase map bounded by max_phase"""
    if seed is None:
        return np.zeros((h, w))
    x, y = _grid(h, w)
    c = np.random.default_rng(seed).uniform(-1, 1, size=5)
    phase = c[0] * x + c[1] * y + c[2] * x * y + c[3] * x ** 2 + c[4] * y ** 2
    bound = np.abs(phase).max()
    return phase / bound * max_phase if bound > 0 else phase

def make_phantom(h: int, w: int, seed: int | None = 0, dtype: torch.dtype = torch.complex64) -> ComplexImage:
    """Randomized ellipse phantom with a smooth random phase. The magnitude lies in [0, 1].
    The same seed always gives the same phantom."""
    if h < 16 or w < 16:
        raise ValueError(f"Phantoms need at least 16x16 pixels, got {h}x{w}")
    phase_seed = None if seed is None else seed + 1
    image = phantom_magnitude(h, w, seed) * np.exp(1j * smooth_phase(h, w, phase_seed))
    return ComplexImage(torch.from_numpy(image).to(dtype))

def make_coil_maps(
    h: int,
    w: int,
    n_coils: int = 5,
    seed: int | None = None,
    width: float = 0.9,
    dtype: torch.dtype = torch.complex64,
) -> CoilSensitivities:
    """Smooth complex Gaussian-bump coil profiles placed on a ring around the field of view, normalized to
    sum_c |C_c|^2 == 1 everywhere. A seed rotates the ring and randomizes each coil's linear phase."""
    if n_coils < 1:
        raise ValueError(f"Need at least one coil, got {n_coils}")
    if n_coils == 1:
        return CoilSensitivities(torch.ones((1, h, w), dtype=dtype))
    rng = np.random.default_rng(seed) if seed is not None else None
    offset = rng.uniform(0, 2 * np.pi) if rng is not None else 0.0
    x, y = _grid(h, w)
    maps = np.empty((n_coils, h, w), dtype=np.complex128)
    for c in range(n_coils):
        theta = offset + 2 * np.pi * c / n_coils
        cx, cy = 1.2 * np.cos(theta), 1.2 * np.sin(theta)
        bump = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2))
        kx, ky = rng.uniform(-1, 1, size=2) if rng is not None else (np.cos(theta), np.sin(theta))
        maps[c] = bump * np.exp(1j * (kx * x + ky * y + theta))
    normalized = normalize_coils(torch.from_numpy(maps))
    return CoilSensitivities(normalized.to(dtype))
