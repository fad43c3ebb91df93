import pytest
import math
import itertools
import torch
from src.data import make_phantom, make_coil_maps
from src.diffusion import build_schedule
from src.diffusion.schedule import posterior_step_mean_variance
from src.diffusion.sampling import (
    InferenceConfig, MultiPathResult, timesteps, low_noise, perturbed_measurements, reverse_step, sample_path,
    aggregate_paths, multipath_reconstruct, single_vs_multi_psnr, path_count_study,
)
from src.kspace import fft2c, apply_coils, complex_to_channels, generate_vd_mask, forward_model, zero_fill
from src.model import LHAN, ModelConfig, backbone_reconstruct
from src.util import make_generator

SCHED = build_schedule(5, 1e-4, 0.2)

def small_model() -> LHAN:
    torch.manual_seed(0)
    return LHAN(ModelConfig(channels=8, n_pab=1, concat_blocks=(1,), time_layers=2)).eval()

def acquisition(n_coils: int = 1, size: int = 32):
    image = make_phantom(size, size, seed=1).data
    coils = make_coil_maps(size, size, n_coils).maps
    mask = generate_vd_mask(size, size, 4, 4, 0).grid
    return image, coils, mask, forward_model(image, coils) * mask

def test_timesteps():
    assert timesteps(5) == [5, 4, 3, 2, 1]
    assert timesteps(10, 3) == [10, 7, 4, 1]
    assert timesteps(10, 4) == [10, 6, 2, 1]
    assert timesteps(1) == [1]

def test_inference_config_rejects():
    with pytest.raises(ValueError):
        InferenceConfig(paths=0)
    with pytest.raises(ValueError):
        InferenceConfig(step_rule="ddim")
    with pytest.raises(ValueError):
        InferenceConfig(stride=0)

def test_last_step_returns_backbone_output():
    image, coils, mask, y = acquisition()
    model = small_model()
    x_t = torch.randn(1, 2, 32, 32)
    expected, _ = backbone_reconstruct(x_t, y.unsqueeze(0), mask.unsqueeze(0), coils.unsqueeze(0), 1, model, SCHED)
    for rule in ("posterior", "direct"):
        cfg = InferenceConfig(clean_measurements=True, step_rule=rule)
        out = reverse_step(x_t, 1, y.unsqueeze(0), mask.unsqueeze(0), coils.unsqueeze(0), model, SCHED, make_generator(0), cfg)
        assert torch.equal(out, complex_to_channels(expected))

def test_default_step_is_backbone_output_plus_step_noise():
    _, coils, mask, y = acquisition()
    model = small_model()
    x_t = torch.randn(1, 2, 32, 32)
    t = 3
    y_b, m_b, c_b = y.unsqueeze(0), mask.unsqueeze(0), coils.unsqueeze(0)
    eps_low = low_noise((1, 32, 32), 0.1, make_generator(1))
    out = reverse_step(x_t, t, y_b, m_b, c_b, model, SCHED, make_generator(0), eps_low=eps_low)

    y_t = perturbed_measurements(zero_fill(y_b, c_b), m_b, c_b, t, SCHED, eps_low)
    with torch.no_grad():
        x_r, _ = backbone_reconstruct(x_t, y_t, m_b, c_b, t, model, SCHED)
    _, sigma = posterior_step_mean_variance(t, SCHED)
    z = torch.randn((1, 2, 32, 32), generator=make_generator(0))
    torch.testing.assert_close(out, complex_to_channels(x_r) + sigma * z)

    posterior = reverse_step(x_t, t, y_b, m_b, c_b, model, SCHED, make_generator(0), InferenceConfig(step_rule="posterior"), eps_low=eps_low)
    assert not torch.allclose(posterior, out)

def test_low_noise_variance():
    eps = low_noise((100_000,), 0.1, make_generator(0))
    assert eps.real.var().item() == pytest.approx(0.1, rel=0.03)
    assert eps.imag.var().item() == pytest.approx(0.1, rel=0.03)
    assert abs(eps.real.mean().item()) < 0.01

def test_perturbed_measurement_noise_level():
    x_u = torch.zeros(64, 64, dtype=torch.complex64)
    ones = torch.ones(1, 64, 64, dtype=torch.complex64)
    full = torch.ones(64, 64)
    g = make_generator(1)
    t = 4
    a = SCHED.alpha_bar[t - 1].item()
    residuals = []
    for _ in range(10):
        y = perturbed_measurements(x_u, full, ones, t, SCHED, low_noise((64, 64), 0.1, g))
        residuals.append(zero_fill(y, ones))
    r = torch.cat([x.flatten() for x in residuals])
    assert r.real.var().item() == pytest.approx(0.1 * (1 - a), rel=0.05)

def test_sample_path_seeded():
    _, coils, mask, y = acquisition()
    model = small_model()
    a = sample_path(y, mask, coils, model, SCHED, 3)
    b = sample_path(y, mask, coils, model, SCHED, 3)
    c = sample_path(y, mask, coils, model, SCHED, 4)
    assert torch.equal(a.data, b.data)
    assert not torch.equal(a.data, c.data)
    with pytest.raises(ValueError):
        sample_path(y.unsqueeze(0), mask, coils, model, SCHED, 0)

def test_sample_path_data_consistency():
    _, coils, mask, y = acquisition()
    model = small_model()
    for stride in (1, 2):
        cfg = InferenceConfig(clean_measurements=True, stride=stride)
        x = sample_path(y, mask, coils, model, SCHED, 0, cfg).data
        k = fft2c(apply_coils(x, coils)) * mask
        torch.testing.assert_close(k, y, rtol=1e-4, atol=1e-4)

def test_noise_options_change_paths():
    _, coils, mask, y = acquisition()
    model = small_model()
    default = sample_path(y, mask, coils, model, SCHED, 0).data
    for cfg in (InferenceConfig(noise_per_path=True), InferenceConfig(clean_measurements=True), InferenceConfig(step_rule="posterior")):
        out = sample_path(y, mask, coils, model, SCHED, 0, cfg).data
        assert torch.isfinite(torch.view_as_real(out)).all()
        assert not torch.equal(out, default)

def test_aggregate_hand_cases():
    x = torch.randn(8, 8, dtype=torch.complex64)
    mean, std = aggregate_paths([x])
    assert torch.equal(mean, x.to(torch.complex128))
    assert torch.all(std == 0)

    zero = torch.zeros(8, 8, dtype=torch.complex64)
    two = torch.full((8, 8), 2, dtype=torch.complex64)
    mean, std = aggregate_paths([zero, two])
    assert torch.all(mean == 1)
    assert torch.all(std == 1)
    with pytest.raises(ValueError):
        aggregate_paths([])

def test_aggregate_permutation_invariant_and_oracle():
    g = make_generator(0)
    paths = [torch.randn(4, 4, dtype=torch.complex128, generator=g) for _ in range(4)]
    mean, std = aggregate_paths(paths)
    for perm in itertools.permutations(paths):
        m, s = aggregate_paths(list(perm))
        assert torch.equal(m, mean) and torch.equal(s, std)

    n = len(paths)
    for i in range(4):
        for j in range(4):
            values = [complex(p[i, j].item()) for p in paths]
            mags = [abs(v) for v in values]
            mu = sum(values) / n
            mu_mag = sum(mags) / n
            sigma = (sum((m - mu_mag) ** 2 for m in mags) / n) ** 0.5
            assert abs(complex(mean[i, j].item()) - mu) < 1e-10
            assert abs(std[i, j].item() - sigma) < 1e-10

def test_multipath_reconstruct():
    image, coils, mask, y = acquisition(n_coils=2)
    model = small_model()
    result = multipath_reconstruct(y, mask, coils, model, SCHED, 3, base_seed=10)
    assert result.seeds == [10, 11, 12]
    assert result.n_paths == 3
    assert torch.all(result.std_map >= 0)
    assert result.manifest()["seeds"] == [10, 11, 12]
    torch.testing.assert_close(result.paths[1], sample_path(y, mask, coils, model, SCHED, 11).data)

    single = multipath_reconstruct(y, mask, coils, model, SCHED, 1, base_seed=10)
    assert torch.all(single.std_map == 0)
    torch.testing.assert_close(single.mean, result.prefix(1).mean)
    assert torch.all(result.prefix(1).std_map == 0)

    threaded = multipath_reconstruct(y, mask, coils, model, SCHED, 3, base_seed=10, cfg=InferenceConfig(workers=2))
    torch.testing.assert_close(threaded.mean, result.mean, rtol=1e-6, atol=1e-6)

    multi, mean_single = single_vs_multi_psnr(result, image)
    assert math.isfinite(multi) and math.isfinite(mean_single)
    with pytest.raises(ValueError):
        multipath_reconstruct(y, mask, coils, model, SCHED, 0)
    with pytest.raises(ValueError):
        result.prefix(4)

def test_multipath_result_validation():
    x = torch.zeros(8, 8, dtype=torch.complex64)
    with pytest.raises(ValueError):
        MultiPathResult.from_paths([x, x], [0])
    with pytest.raises(ValueError):
        MultiPathResult([x], x.to(torch.complex128), -torch.ones(8, 8, dtype=torch.float64), [0])

def test_path_count_study():
    image, coils, mask, y = acquisition()
    df = path_count_study(y, mask, coils, small_model(), SCHED, image, counts=(1, 2, 3))
    assert list(df["n_paths"]) == [1, 2, 3]
    assert list(df.columns) == ["n_paths", "psnr", "pcc"]
    assert df["pcc"].isna().iloc[0]
