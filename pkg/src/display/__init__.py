# The module responsible for turning reconstructions, error maps and uncertainty maps into image files
# Every map is saved twice: as a bare grayscale PNG holding exactly the map, and inside an annotated summary figure

from __future__ import annotations
import os
from typing import Any
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import matplotlib.image as mpimg
from ..analysis.metrics import magnitude

def _range(*maps: np.ndarray) -> tuple[float, float]:
    """A shared [0, max] intensity range. All-zero maps get [0, 1] so that they render black."""
    top = max(float(m.max()) for m in maps)
    return 0.0, top if top > 0 else 1.0

def save_map(path: str, image: Any, vmin: float | None = None, vmax: float | None = None):
    """Saves a single map as a grayscale PNG, pixel for pixel"""
    m = magnitude(image)
    lo, hi = _range(m) if vmin is None or vmax is None else (vmin, vmax)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    plt.imsave(path, m, cmap="gray", vmin=lo, vmax=hi)

def read_map(path: str) -> np.ndarray:
    return mpimg.imread(path)

def save_reconstruction_figures(
    out_dir: str,
    recon: Any,
    uncertainty: Any,
    reference: Any | None = None,
    name: str = "slice",
) -> dict[str, str]:
    """Writes <name>_recon.png, <name>_uncertainty.png, <name>_error.png (if a reference is given) and an annotated
    <name>_summary.png. Error and uncertainty share one intensity scale and one colorbar. Returns the written paths."""
    recon_m = magnitude(recon)
    std_m = magnitude(uncertainty)
    maps: dict[str, np.ndarray] = {"recon": recon_m}
    if reference is not None:
        maps["error"] = np.abs(recon_m - magnitude(reference))
    maps["uncertainty"] = std_m

    shared = _range(*(maps[k] for k in ("error", "uncertainty") if k in maps))
    paths = {}
    for key, m in maps.items():
        paths[key] = os.path.join(out_dir, f"{name}_{key}.png")
        if key == "recon":
            save_map(paths[key], m)
        else:
            save_map(paths[key], m, *shared)

    fig, axes = plt.subplots(1, len(maps), figsize=(4 * len(maps), 4.4), squeeze=False)
    im = None
    for ax, (key, m) in zip(axes[0], maps.items()):
        lo, hi = _range(m) if key == "recon" else shared
        shown = ax.imshow(m, cmap="gray", vmin=lo, vmax=hi)
        if key != "recon":
            im = shown
        ax.set_title(f"{key}\nmin {m.min():.4g}  max {m.max():.4g}", fontsize=9)
        ax.axis("off")
    if im is not None:
        fig.colorbar(im, ax=list(axes[0][1:]), shrink=0.8, label="intensity (shared)")
    paths["summary"] = os.path.join(out_dir, f"{name}_summary.png")
    fig.savefig(paths["summary"], dpi=100)
    plt.close(fig)
    return paths
