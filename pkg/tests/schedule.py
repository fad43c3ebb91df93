import pytest
import math
import torch
from src.diffusion import NoiseSchedule, ScheduleConfig, build_schedule, forward_noise, x0_from_eps, posterior_step_mean_variance

def test_two_step_schedule():
    s = NoiseSchedule.from_betas([0.1, 0.2])
    assert s.T == 2
    torch.testing.assert_close(s.alpha_bar, torch.tensor([0.9, 0.72], dtype=torch.float64))
    assert s.beta_tilde[0].item() == 0
    assert s.beta_tilde[1].item() == pytest.approx(0.1 / 0.28 * 0.2, abs=1e-12)

def test_linear_schedule_properties():
    s = build_schedule(1000, 1e-4, 0.02)
    assert s.T == 1000
    assert torch.all(s.beta[1:] > s.beta[:-1])
    assert torch.all(s.alpha_bar[1:] < s.alpha_bar[:-1])
    assert torch.all(s.beta_tilde >= 0) and torch.all(s.beta_tilde <= s.beta)
    # Independent cumulative product
    running = 1.0
    for i, b in enumerate(s.beta.tolist()):
        running *= 1 - b
        assert s.alpha_bar[i].item() == pytest.approx(running, abs=1e-12)

def test_schedule_rejects_bad_parameters():
    with pytest.raises(ValueError):
        build_schedule(0)
    with pytest.raises(ValueError):
        build_schedule(10, 0.02, 0.01)
    with pytest.raises(ValueError):
        build_schedule(10, kind="cosine")  # type: ignore
    with pytest.raises(ValueError):
        ScheduleConfig(T=10, beta_end=1.0)

def test_forward_noise_and_inversion():
    s = build_schedule(50, 1e-4, 0.2)
    g = torch.Generator().manual_seed(0)
    for _ in range(100):
        x0 = torch.randn(2, 8, 8, dtype=torch.float64, generator=g)
        eps = torch.randn(2, 8, 8, dtype=torch.float64, generator=g)
        t = int(torch.randint(1, 51, (1,), generator=g))
        x_t = forward_noise(x0, t, eps, s)
        torch.testing.assert_close(x0_from_eps(x_t, t, eps, s), x0, rtol=0, atol=1e-8)

def test_inversion_with_zero_noise():
    s = build_schedule(10)
    x_t = torch.randn(2, 8, 8, dtype=torch.float64)
    expected = x_t / s.alpha_bar[4].sqrt()
    torch.testing.assert_close(x0_from_eps(x_t, 5, torch.zeros_like(x_t), s), expected)

def test_batched_time_indices():
    s = build_schedule(10)
    x0 = torch.ones(3, 2, 4, 4, dtype=torch.float64)
    t = torch.tensor([1, 5, 10])
    out = forward_noise(x0, t, torch.zeros_like(x0), s)
    for i, ti in enumerate(t.tolist()):
        assert torch.allclose(out[i], s.alpha_bar[ti - 1].sqrt() * x0[i])

def test_forward_noise_rejects():
    s = build_schedule(10)
    x = torch.zeros(8, 8)
    with pytest.raises(ValueError):
        forward_noise(x, 0, x, s)
    with pytest.raises(ValueError):
        forward_noise(x, 11, x, s)
    with pytest.raises(ValueError):
        forward_noise(x, 3, torch.zeros(4, 4), s)

def test_singular_inversion_rejected():
    s = NoiseSchedule.from_betas([0.999999] * 3)
    with pytest.raises(ValueError):
        x0_from_eps(torch.zeros(8, 8), 3, torch.zeros(8, 8), s)

def test_posterior_sigma():
    s = NoiseSchedule.from_betas([0.1, 0.2])
    coefs, sigma = posterior_step_mean_variance(1, s)
    assert sigma == 0
    assert coefs.x0_coef == 1 and coefs.xt_coef == 0
    _, sigma = posterior_step_mean_variance(2, s)
    assert sigma == pytest.approx(math.sqrt(0.1 / 0.28 * 0.2), abs=1e-9)
    assert sigma == pytest.approx(0.267261, abs=1e-6)

    s = build_schedule(100)
    for t in range(1, 101):
        _, sigma = posterior_step_mean_variance(t, s)
        assert sigma ** 2 <= s.beta[t - 1].item() + 1e-15
    with pytest.raises(ValueError):
        posterior_step_mean_variance(0, s)

def test_strided_posterior_matches_single_step():
    s = build_schedule(20, 1e-4, 0.1)
    a, sa = posterior_step_mean_variance(7, s)
    b, sb = posterior_step_mean_variance(7, s, prev=6)
    assert a == b and sa == sb
    c, _ = posterior_step_mean_variance(7, s, prev=3)
    assert c.x0_coef > a.x0_coef
