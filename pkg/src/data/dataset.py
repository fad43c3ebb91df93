# On-disk phantom dataset
# Layout: manifest.json, slices/<id>.img.raw, slices/<id>.coil.raw, masks/<id>.R<r>.mask.raw, each with a .meta.json sidecar
# The manifest is written last, so a directory without one is an interrupted build and is rejected.

from __future__ import annotations
import os
import json
import shutil
import logging
from dataclasses import dataclass, field, asdict
from typing import Iterator, Literal
import numpy as np
import torch
from torch import Tensor
from torch.utils.data import Dataset
from tqdm.auto import tqdm
from ..kspace.types import ComplexImage, CoilSensitivities, SamplingMask
from ..kspace.mask import generate_vd_mask, acs_block
from ..kspace.ops import forward_model
from ..util import derive_seed
from .phantom import make_phantom, make_coil_maps
from .rawio import write_array, read_array, InvalidDatasetError

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "val", "test")
Split = Literal["train", "val", "test"]

# Salts for derive_seed so that phantom, coil and mask streams never coincide
_PHANTOM_SALT, _COIL_SALT, _MASK_SALT = 1, 2, 3

def acceleration_tag(r: float) -> str:
    return f"R{r:g}"

@dataclass(frozen=True)
class ManifestEntry:
    slice_id: str
    split: str
    image: str
    coils: str
    masks: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    entries: tuple[ManifestEntry, ...]
    shape: tuple[int, int]
    n_coils: int
    accelerations: tuple[float, ...]
    acs_lines: int
    seed: int
    version: int = DATASET_FORMAT_VERSION

    def __post_init__(self):
        seen: dict[str, str] = {}
        for e in self.entries:
            if e.split not in SPLITS:
                raise InvalidDatasetError(f"Unknown split {e.split} for slice {e.slice_id}")
            if e.slice_id in seen:
                raise InvalidDatasetError(f"Slice {e.slice_id} appears twice (splits {seen[e.slice_id]} and {e.split})")
            seen[e.slice_id] = e.split

    def ids(self, split: str | None = None) -> list[str]:
        return [e.slice_id for e in self.entries if split is None or e.split == split]

    def entry(self, slice_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.slice_id == slice_id:
                return e
        raise InvalidDatasetError(f"Unknown slice id {slice_id}")

    @property
    def acs_region(self) -> tuple[int, int, int, int] | None:
        return acs_block(*self.shape, self.acs_lines)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "shape": list(self.shape),
            "n_coils": self.n_coils,
            "accelerations": list(self.accelerations),
            "acs_lines": self.acs_lines,
            "seed": self.seed,
            "entries": [asdict(e) for e in self.entries],
        }


def build_dataset(
    n_train: int,
    n_val: int,
    n_test: int,
    shape: tuple[int, int],
    seed: int,
    out_dir: str,
    n_coils: int = 5,
    accelerations: tuple[float, ...] = (4.0, 8.0),
    acs_lines: int = 12,
    force: bool = False,
    verbose: bool = True,
) -> DatasetManifest:
    """Generates phantoms, coil maps and one sampling mask per acceleration for every slice.
    The same arguments always produce a byte-identical directory."""
    if min(n_train, n_val, n_test) < 0 or n_train + n_val + n_test == 0:
        raise ValueError(f"Need a nonnegative number of slices per split and at least one slice, got {n_train}/{n_val}/{n_test}")
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path) and not force:
        raise FileExistsError(f"{out_dir} already holds a dataset, pass force to overwrite it")
    if os.path.exists(manifest_path):
        os.remove(manifest_path)
    if force:
        for sub in ("slices", "masks"):
            shutil.rmtree(os.path.join(out_dir, sub), ignore_errors=True)

    h, w = shape
    splits = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    entries = []
    for i, split in enumerate(tqdm(splits, desc="Building dataset", disable=not verbose)):
        slice_id = f"{split}-{i:04d}"
        image = make_phantom(h, w, seed=derive_seed(seed, i, _PHANTOM_SALT))
        coils = make_coil_maps(h, w, n_coils, seed=derive_seed(seed, i, _COIL_SALT))
        image_rel = os.path.join("slices", f"{slice_id}.img.raw")
        coil_rel = os.path.join("slices", f"{slice_id}.coil.raw")
        write_array(os.path.join(out_dir, image_rel), image.numpy(), "complex64")
        write_array(os.path.join(out_dir, coil_rel), coils.maps.numpy(), "complex64")
        masks = {}
        for r in accelerations:
            mask = generate_vd_mask(h, w, r, acs_lines, derive_seed(seed, i, _MASK_SALT, round(r * 1000)))
            rel = os.path.join("masks", f"{slice_id}.{acceleration_tag(r)}.mask.raw")
            write_array(os.path.join(out_dir, rel), mask.grid.numpy(), "float32")
            masks[acceleration_tag(r)] = rel
        entries.append(ManifestEntry(slice_id, split, image_rel, coil_rel, masks))

    manifest = DatasetManifest(
        root=os.path.abspath(out_dir),
        entries=tuple(entries),
        shape=(h, w),
        n_coils=n_coils,
        accelerations=tuple(float(r) for r in accelerations),
        acs_lines=acs_lines,
        seed=seed,
    )
    tmp = manifest_path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
    os.replace(tmp, manifest_path)
    logger.info(f"Wrote {len(entries)} slices to {out_dir}")
    return manifest

def load_manifest(root: str) -> DatasetManifest:
    path = os.path.join(root, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise InvalidDatasetError(f"No manifest in {root}: the dataset is missing or its build was interrupted")
    try:
        with open(path) as f:
            d = json.load(f)
        if d["version"] != DATASET_FORMAT_VERSION:
            raise InvalidDatasetError(f"Dataset format version {d['version']} is not supported")
        return DatasetManifest(
            root=os.path.abspath(root),
            entries=tuple(ManifestEntry(**e) for e in d["entries"]),
            shape=tuple(d["shape"]),  # type: ignore
            n_coils=int(d["n_coils"]),
            accelerations=tuple(float(r) for r in d["accelerations"]),
            acs_lines=int(d["acs_lines"]),
            seed=int(d["seed"]),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise InvalidDatasetError(f"Corrupted manifest {path}: {e}") from e

def load_slice(manifest: DatasetManifest, slice_id: str) -> tuple[ComplexImage, CoilSensitivities]:
    """Ground-truth image and coil maps of one slice, both validated"""
    e = manifest.entry(slice_id)
    h, w = manifest.shape
    image = read_array(os.path.join(manifest.root, e.image), expected_shape=(h, w))
    coils = read_array(os.path.join(manifest.root, e.coils), expected_shape=(manifest.n_coils, h, w))
    return ComplexImage(torch.from_numpy(image)), CoilSensitivities(torch.from_numpy(coils))

def load_mask(manifest: DatasetManifest, slice_id: str, acceleration: float) -> SamplingMask:
    e = manifest.entry(slice_id)
    tag = acceleration_tag(acceleration)
    if tag not in e.masks:
        raise InvalidDatasetError(f"Slice {slice_id} has no mask for acceleration {acceleration:g}, available: {list(e.masks)}")
    grid = read_array(os.path.join(manifest.root, e.masks[tag]), expected_shape=manifest.shape)
    return SamplingMask(torch.from_numpy(grid), manifest.acs_region, float(acceleration))


@dataclass
class Sample:
    """One slice ready for training or inference. Tensors are unbatched unless produced by stack_samples.

    y_u: (ncoils, H, W) acquired k-space, mask / acs: (H, W) float, coils: (ncoils, H, W), target: (H, W) ground truth"""
    slice_id: str | list[str]
    y_u: Tensor
    mask: Tensor
    acs: Tensor
    coils: Tensor
    target: Tensor

    def to(self, device: str | torch.device) -> Sample:
        return Sample(self.slice_id, self.y_u.to(device), self.mask.to(device), self.acs.to(device), self.coils.to(device), self.target.to(device))

def stack_samples(samples: list[Sample]) -> Sample:
    if not samples:
        raise ValueError("Cannot stack an empty list of samples")
    return Sample(
        slice_id=[s.slice_id for s in samples],  # type: ignore
        y_u=torch.stack([s.y_u for s in samples]),
        mask=torch.stack([s.mask for s in samples]),
        acs=torch.stack([s.acs for s in samples]),
        coils=torch.stack([s.coils for s in samples]),
        target=torch.stack([s.target for s in samples]),
    )


class SliceDataset(Dataset):
    """Slices of one split, undersampled with their stored mask at the given acceleration"""
    def __init__(self, manifest: DatasetManifest, split: str, acceleration: float = 4.0, ids: list[str] | None = None):
        if split not in SPLITS:
            raise ValueError(f"Unknown split {split}, expected one of {SPLITS}")
        self.manifest = manifest
        self.split = split
        self.acceleration = float(acceleration)
        available = manifest.ids(split)
        if ids is not None:
            missing = [i for i in ids if i not in available]
            if missing:
                raise InvalidDatasetError(f"Slices {missing} are not in the {split} split")
            available = list(ids)
        self.ids = available

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, index: int) -> Sample:
        slice_id = self.ids[index]
        image, coils = load_slice(self.manifest, slice_id)
        mask = load_mask(self.manifest, slice_id, self.acceleration)
        y_u = forward_model(image.data, coils.maps) * mask.grid
        return Sample(slice_id, y_u, mask.grid, mask.acs_grid, coils.maps, image.data)

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]
