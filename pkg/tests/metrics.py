import pytest
import os
import json
import math
import numpy as np
import torch
from src.analysis import psnr, ssim, mae, pcc, bootstrap_ci, foreground_mask, evaluate_slice, SliceMetrics, MetricReport

def positive_image(seed: int = 0, size: int = 32) -> np.ndarray:
    return 1 + np.random.default_rng(seed).random((size, size))

def test_psnr_cases():
    ref = np.full((16, 16), 0.5)
    assert psnr(ref + 0.1, ref, data_range=1.0) == pytest.approx(20.0, abs=1e-9)
    assert psnr(ref, ref) == math.inf

    ref = positive_image()
    noise = np.random.default_rng(1).uniform(-0.1, 0.1, ref.shape)
    drop = psnr(ref + noise, ref) - psnr(ref + 2 * noise, ref)
    assert drop == pytest.approx(20 * math.log10(2), abs=1e-9)
    assert drop == pytest.approx(6.02, abs=1e-2)

def test_psnr_accepts_complex_tensors():
    ref = torch.polar(torch.from_numpy(positive_image()), torch.full((32, 32), 0.7, dtype=torch.float64))
    # Only magnitudes are compared
    assert psnr(ref * 1j, ref) == math.inf
    with pytest.raises(ValueError):
        psnr(ref, ref[:16])
    with pytest.raises(ValueError):
        psnr(ref, ref, data_range=0)

def test_ssim_identity_and_symmetry():
    x = positive_image(2)
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    for seed in range(5):
        a, b = positive_image(seed), positive_image(seed + 10)
        s = ssim(a, b, data_range=2.0)
        assert s == pytest.approx(ssim(b, a, data_range=2.0), abs=1e-12)
        assert -1 <= s < 1

def test_ssim_constant_images():
    a, b, dr = 0.25, 0.5, 1.0
    c1 = (0.01 * dr) ** 2
    luminance = (2 * a * b + c1) / (a ** 2 + b ** 2 + c1)
    assert ssim(np.full((32, 32), a), np.full((32, 32), b), data_range=dr) == pytest.approx(luminance, rel=1e-6)

def test_ssim_rejects_small_images():
    with pytest.raises(ValueError):
        ssim(np.ones((8, 8)), np.ones((8, 8)))

def test_mae_cases():
    ref = positive_image(3)
    assert mae(ref, ref) == 0
    assert mae(ref + 0.5, ref) == pytest.approx(0.5, abs=1e-12)
    x = positive_image(4)
    oracle = sum(abs(abs(p) - abs(q)) for p, q in zip(x.ravel().tolist(), ref.ravel().tolist())) / x.size
    assert mae(x, ref) == pytest.approx(oracle, abs=1e-12)
    with pytest.raises(ValueError):
        mae(x, ref[:, :8])

def test_pcc_cases():
    u = np.random.default_rng(5).random((100, 100))
    assert pcc(u, u) == pytest.approx(1.0, abs=1e-12)
    assert pcc(u, -u) == pytest.approx(-1.0, abs=1e-12)
    assert pcc(2 * u + 3, u) == pytest.approx(1.0, abs=1e-12)
    independent = np.random.default_rng(6).random((100, 100))
    assert abs(pcc(u, independent)) < 0.05

def test_pcc_keeps_the_sign_of_real_maps():
    u = np.random.default_rng(13).random((32, 32))
    e = u + np.random.default_rng(14).normal(0, 0.1, u.shape)
    r = pcc(u, e)
    assert pcc(u, 2 * e - 1) == pytest.approx(r, abs=1e-12)
    assert pcc(u, -e) == pytest.approx(-r, abs=1e-12)
    assert pcc(torch.from_numpy(u), torch.from_numpy(-e)) == pytest.approx(-r, abs=1e-12)
    assert pcc(torch.from_numpy(u) * 1j, torch.from_numpy(e)) == pytest.approx(r, abs=1e-12)

def test_pcc_rejects():
    u = np.random.default_rng(7).random((16, 16))
    with pytest.raises(ValueError, match="variance"):
        pcc(np.zeros((16, 16)), u)
    with pytest.raises(ValueError):
        pcc(u, u, np.ones((8, 8), dtype=bool))

def test_pcc_foreground_restriction():
    ref = np.zeros((16, 16))
    ref[4:12, 4:12] = 1
    fg = foreground_mask(ref)
    assert fg.sum() == 64
    u = np.random.default_rng(8).random((16, 16))
    e = u.copy()
    e[~fg] = np.random.default_rng(9).random(int((~fg).sum()))
    assert pcc(u, e, fg) == pytest.approx(1.0, abs=1e-12)
    assert pcc(u, e) < 1

def test_bootstrap_ci():
    values = np.random.default_rng(10).normal(1.0, 0.2, 50)
    low, high = bootstrap_ci(values, n_resamples=999)
    assert low < values.mean() < high
    assert 0 < low
    assert bootstrap_ci(values, n_resamples=999) == (low, high)
    with pytest.raises(ValueError):
        bootstrap_ci([1.0])

def test_evaluate_slice():
    ref = positive_image(11)
    recon = ref + np.random.default_rng(12).normal(0, 0.05, ref.shape)
    std_map = np.abs(np.abs(recon) - ref) + 0.01
    m = evaluate_slice(recon, ref, std_map)
    assert m.pcc == pytest.approx(1.0, abs=1e-9)
    assert m.psnr == pytest.approx(psnr(recon, ref))
    assert evaluate_slice(recon, ref, np.zeros_like(ref)).pcc is None
    assert evaluate_slice(recon, ref).pcc is None

def test_report_aggregate_and_table(tmp_path):
    report = MetricReport()
    report.add("dmsm", "a", SliceMetrics(30.0, 0.9, 0.01, 0.4))
    report.add("dmsm", "b", SliceMetrics(32.0, 0.8, 0.03, None))
    report.add("zero_filled", "a", SliceMetrics(math.inf, 1.0, 0.0))
    assert report.methods == ["dmsm", "zero_filled"]

    agg = report.aggregate()
    assert agg.loc["dmsm", "psnr_mean"] == pytest.approx(31.0)
    assert agg.loc["dmsm", "psnr_std"] == pytest.approx(1.0)
    assert agg.loc["dmsm", "ssim_mean"] == pytest.approx(np.mean([0.9, 0.8]))
    assert agg.loc["dmsm", "pcc_mean"] == pytest.approx(0.4)

    table = report.table()
    assert "perfect" in table
    assert "31.0000 ± 1.0000" in table
    assert "pcc: n/a" in table

    d = report.to_dict()
    assert d["aggregate"]["zero_filled"]["psnr_mean"] == "perfect"
    assert d["per_slice"][2]["psnr"] == "perfect"
    report.to_json(str(tmp_path / "report.json"))
    with open(tmp_path / "report.json") as f:
        assert json.load(f) == d
    report.to_csv(str(tmp_path / "report.csv"))
    assert os.path.getsize(tmp_path / "report.csv") > 0

def test_empty_report():
    with pytest.raises(ValueError):
        MetricReport().aggregate()
