import pytest
import os
import json
import math
import numpy as np
import torch
from src.data import (
    make_phantom, make_coil_maps, write_array, read_array, InvalidDatasetError,
    build_dataset, load_manifest, load_slice, load_mask, SliceDataset, stack_samples,
)
from src.data.dataset import MANIFEST_NAME
from src.data.rawio import meta_path
from src.kspace import CoilSensitivities, generate_vd_mask, simulate_acquisition, zero_fill_recon
from src.analysis import psnr, ssim

def test_phantom_deterministic_and_bounded():
    a, b = make_phantom(64, 64, seed=5), make_phantom(64, 64, seed=5)
    assert torch.equal(a.data, b.data)
    mag = a.magnitude
    assert mag.min().item() >= 0
    assert mag.max().item() == pytest.approx(1.0, abs=1e-6)
    phase = torch.angle(a.data)[mag > 0.05]
    assert phase.abs().max().item() <= math.pi / 4 + 1e-5

def test_phantoms_differ_between_seeds():
    a, b = make_phantom(64, 64, seed=0), make_phantom(64, 64, seed=1)
    assert ssim(a, b, data_range=1.0) < 0.99
    canonical = make_phantom(64, 64, seed=None)
    assert torch.all(canonical.data.imag == 0)

def test_phantom_too_small():
    with pytest.raises(ValueError):
        make_phantom(8, 8)

def test_coil_maps():
    single = make_coil_maps(32, 32, 1)
    assert torch.all(single.maps == 1)
    maps = make_coil_maps(32, 32, 5, seed=3, dtype=torch.complex128).maps
    residual = (maps.abs().square().sum(0) - 1).abs().max().item()
    assert residual < 1e-6
    assert torch.equal(make_coil_maps(32, 32, 5, seed=3).maps, make_coil_maps(32, 32, 5, seed=3).maps)
    assert not torch.equal(make_coil_maps(32, 32, 5, seed=3).maps, make_coil_maps(32, 32, 5, seed=4).maps)
    with pytest.raises(ValueError):
        make_coil_maps(32, 32, 0)
    with pytest.raises(ValueError):
        CoilSensitivities(2 * maps)

def test_single_precision_coil_maps_meet_the_normalization_tolerance():
    maps = make_coil_maps(64, 64, 5, seed=0).maps
    assert maps.dtype == torch.complex64
    residual = (maps.to(torch.complex128).abs().square().sum(0) - 1).abs().max().item()
    assert residual < 1e-6
    with pytest.raises(ValueError, match="normalized"):
        CoilSensitivities(maps * math.sqrt(1 + 5e-6))

def test_raw_roundtrip(tmp_path):
    path = str(tmp_path / "x.raw")
    x = (np.random.default_rng(0).normal(size=(3, 4)) + 1j).astype(np.complex64)
    write_array(path, x, "complex64")
    assert np.array_equal(read_array(path, (3, 4)), x)
    with open(meta_path(path)) as f:
        meta = json.load(f)
    assert meta["shape"] == [3, 4] and meta["byte_order"] == "little"

    with pytest.raises(InvalidDatasetError):
        read_array(path, (4, 3))
    with pytest.raises(ValueError):
        write_array(str(tmp_path / "y.raw"), x, "float16")

    with open(path, "r+b") as f:
        f.seek(5)
        f.write(b"\xff")
    with pytest.raises(InvalidDatasetError, match="Checksum"):
        read_array(path)
    os.remove(meta_path(path))
    with pytest.raises(InvalidDatasetError):
        read_array(path)

def build(root: str, **kwargs):
    args = dict(n_coils=2, accelerations=(4.0, 8.0), acs_lines=4, verbose=False)
    args.update(kwargs)
    return build_dataset(3, 2, 1, (32, 32), 7, root, **args)

def test_build_and_load(tmp_path):
    root = str(tmp_path / "data")
    built = build(root)
    manifest = load_manifest(root)
    assert manifest.to_dict() == built.to_dict()
    assert len(manifest.ids("train")) == 3 and len(manifest.ids("val")) == 2 and len(manifest.ids("test")) == 1
    splits = [set(manifest.ids(s)) for s in ("train", "val", "test")]
    assert not (splits[0] & splits[1]) and not (splits[0] & splits[2]) and not (splits[1] & splits[2])

    image, coils = load_slice(manifest, "val-0003")
    assert image.shape == (32, 32) and coils.ncoils == 2
    mask = load_mask(manifest, "val-0003", 8.0)
    assert mask.acs_region == manifest.acs_region
    assert torch.all(mask.grid[14:18, 14:18] == 1)

    with pytest.raises(InvalidDatasetError):
        load_slice(manifest, "train-9999")
    with pytest.raises(InvalidDatasetError):
        load_mask(manifest, "val-0003", 6.0)

def test_build_is_reproducible(tmp_path):
    a, b = build(str(tmp_path / "a")), build(str(tmp_path / "b"))
    for ea, eb in zip(a.entries, b.entries):
        for rel_a, rel_b in [(ea.image, eb.image), (ea.coils, eb.coils), *zip(ea.masks.values(), eb.masks.values())]:
            with open(meta_path(os.path.join(a.root, rel_a))) as f, open(meta_path(os.path.join(b.root, rel_b))) as g:
                assert json.load(f)["sha256"] == json.load(g)["sha256"]

def test_build_refuses_to_overwrite(tmp_path):
    root = str(tmp_path / "data")
    build(root)
    with pytest.raises(FileExistsError):
        build(root)
    build(root, force=True)
    assert os.path.isfile(os.path.join(root, MANIFEST_NAME))

def test_forced_rebuild_leaves_no_stale_files(tmp_path):
    root = str(tmp_path / "data")
    build(root)
    smaller = build_dataset(1, 0, 0, (32, 32), 7, root, n_coils=2, accelerations=(4.0,), acs_lines=4, force=True, verbose=False)
    expected = set()
    for e in smaller.entries:
        for rel in (e.image, e.coils, *e.masks.values()):
            expected |= {rel, os.path.relpath(meta_path(os.path.join(root, rel)), root)}
    for sub in ("slices", "masks"):
        on_disk = {os.path.join(sub, name) for name in os.listdir(os.path.join(root, sub))}
        assert on_disk <= expected
    assert len(load_manifest(root).entries) == 1

def test_missing_manifest(tmp_path):
    root = str(tmp_path / "data")
    build(root)
    os.remove(os.path.join(root, MANIFEST_NAME))
    with pytest.raises(InvalidDatasetError):
        load_manifest(root)

def test_slice_dataset(tmp_path):
    manifest = build(str(tmp_path / "data"))
    ds = SliceDataset(manifest, "train", 4.0)
    assert len(ds) == 3
    s = ds[1]
    assert s.slice_id == "train-0001"
    assert s.y_u.shape == (2, 32, 32)
    assert torch.all(s.y_u[:, s.mask == 0] == 0)
    assert torch.all(s.acs <= s.mask)
    assert [x.slice_id for x in ds] == manifest.ids("train")
    batch = stack_samples([ds[0], ds[2]])
    assert batch.y_u.shape == (2, 2, 32, 32) and batch.slice_id == ["train-0000", "train-0002"]

    assert len(SliceDataset(manifest, "train", ids=["train-0002"])) == 1
    with pytest.raises(InvalidDatasetError):
        SliceDataset(manifest, "train", ids=["val-0003"])
    with pytest.raises(ValueError):
        SliceDataset(manifest, "holdout")

def test_zero_filled_smoke_chain():
    image = make_phantom(64, 64, seed=2)
    coils = make_coil_maps(64, 64, 5, seed=2)
    y_u = simulate_acquisition(image, coils, generate_vd_mask(64, 64, 4, 8, 2))
    value = psnr(zero_fill_recon(y_u, coils), image)
    assert math.isfinite(value) and value > 0
