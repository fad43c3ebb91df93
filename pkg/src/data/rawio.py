# Raw little-endian array files with a JSON sidecar
# <name>.raw holds the bytes, <name>.raw.meta.json holds shape, dtype tag, byte order, format version and a sha256

from __future__ import annotations
import os
import json
import numpy as np
from ..util import file_sha256

RAW_FORMAT_VERSION = 1
DTYPES = {
    "complex64": np.dtype("<c8"),
    "float32": np.dtype("<f4"),
}

class InvalidDatasetError(ValueError):
    pass

def meta_path(path: str) -> str:
    return path + ".meta.json"

def _write_atomic(path: str, data: bytes):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)

def write_array(path: str, array: np.ndarray, dtype: str = "complex64"):
    if dtype not in DTYPES:
        raise ValueError(f"Unsupported dtype tag {dtype}, expected one of {list(DTYPES)}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    data = np.ascontiguousarray(array, dtype=DTYPES[dtype])
    _write_atomic(path, data.tobytes())
    meta = {
        "shape": list(data.shape),
        "dtype": dtype,
        "byte_order": "little",
        "version": RAW_FORMAT_VERSION,
        "sha256": file_sha256(path),
    }
    _write_atomic(meta_path(path), json.dumps(meta, indent=2, sort_keys=True).encode())

def read_meta(path: str) -> dict:
    try:
        with open(meta_path(path)) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise InvalidDatasetError(f"Missing sidecar for {path}")
    except json.JSONDecodeError as e:
        raise InvalidDatasetError(f"Corrupted sidecar for {path}: {e}") from e
    if meta.get("version") != RAW_FORMAT_VERSION:
        raise InvalidDatasetError(f"{path}: format version {meta.get('version')} is not supported")
    if meta.get("byte_order") != "little" or meta.get("dtype") not in DTYPES:
        raise InvalidDatasetError(f"{path}: unsupported layout {meta.get('dtype')} / {meta.get('byte_order')}")
    return meta

def read_array(path: str, expected_shape: tuple[int, ...] | None = None, verify: bool = True) -> np.ndarray:
    """Reads an array written by write_array, checking the sidecar. Returns a native-endian copy."""
    meta = read_meta(path)
    if not os.path.isfile(path):
        raise InvalidDatasetError(f"Missing array file {path}")
    if verify and file_sha256(path) != meta["sha256"]:
        raise InvalidDatasetError(f"Checksum mismatch for {path}")
    shape = tuple(meta["shape"])
    if expected_shape is not None and shape != tuple(expected_shape):
        raise InvalidDatasetError(f"{path} has shape {shape}, expected {tuple(expected_shape)}")
    dtype = DTYPES[meta["dtype"]]
    data = np.fromfile(path, dtype=dtype)
    if data.size != int(np.prod(shape)):
        raise InvalidDatasetError(f"{path} holds {data.size} elements, sidecar declares {shape}")
    return data.reshape(shape).astype(dtype.newbyteorder("="))
