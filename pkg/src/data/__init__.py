# Synthetic phantom data, the raw on-disk format, and the datasets fed to training and inference

from .phantom import make_phantom, make_coil_maps
from .rawio import write_array, read_array, InvalidDatasetError
from .dataset import (
    DatasetManifest,
    ManifestEntry,
    Sample,
    SliceDataset,
    build_dataset,
    load_manifest,
    load_slice,
    load_mask,
    stack_samples,
)
