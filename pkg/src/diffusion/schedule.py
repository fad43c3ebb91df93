# Diffusion variance schedule and the closed-form forward process
# Time indices run over 1..T. Arrays are stored 0-based, so entry t - 1 belongs to time t
# alpha_bar_0 is taken to be 1, which makes beta_tilde_1 == 0 and the last reverse step noise-free

from __future__ import annotations
from dataclasses import dataclass
from typing import Literal
import torch
from torch import Tensor

MIN_ALPHA_BAR = 1e-12

@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Immutable table of beta, alpha, alpha_bar, beta_tilde and sigma, all float64 of length T"""
    beta: Tensor
    alpha: Tensor
    alpha_bar: Tensor
    beta_tilde: Tensor
    sigma: Tensor

    def __post_init__(self):
        T = self.beta.numel()
        assert T >= 1
        assert all(x.shape == (T,) for x in (self.alpha, self.alpha_bar, self.beta_tilde, self.sigma))

    @property
    def T(self) -> int:
        return self.beta.numel()

    @classmethod
    def from_betas(cls, betas: Tensor | list[float]) -> NoiseSchedule:
        beta = torch.as_tensor(betas, dtype=torch.float64).flatten().clone()
        if beta.numel() < 1:
            raise ValueError("A schedule needs at least one step")
        if not torch.all((beta > 0) & (beta < 1)):
            raise ValueError("All betas must lie strictly between 0 and 1")
        alpha = 1 - beta
        alpha_bar = torch.cumprod(alpha, dim=0)
        alpha_bar_prev = torch.cat([torch.ones(1, dtype=torch.float64), alpha_bar[:-1]])
        beta_tilde = (1 - alpha_bar_prev) / (1 - alpha_bar) * beta
        sigma = beta_tilde.sqrt()
        return cls(beta, alpha, alpha_bar, beta_tilde, sigma)

    def check_t(self, t: int | Tensor):
        if isinstance(t, Tensor):
            bad = bool(((t < 1) | (t > self.T)).any())
        else:
            bad = not 1 <= t <= self.T
        if bad:
            raise ValueError(f"Time index out of range 1..{self.T}: {t}")

    def gather(self, table: Tensor, t: int | Tensor, like: Tensor) -> Tensor:
        """Looks up table[t - 1] and shapes it to broadcast against `like`.
        A tensor t of shape (B,) indexes per batch element along the leading axis of `like`."""
        self.check_t(t)
        dtype = like.real.dtype if like.is_complex() else like.dtype
        if isinstance(t, Tensor) and t.ndim > 0:
            values = table.to(like.device)[t.long().to(like.device) - 1]
            return values.to(dtype).view(-1, *([1] * (like.ndim - 1)))
        return table[int(t) - 1].to(device=like.device, dtype=dtype)


@dataclass
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    kind: str = "linear"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ValueError(f"Need 0 < beta_start <= beta_end < 1, got {self.beta_start}, {self.beta_end}")
        if self.kind != "linear":
            raise ValueError(f"Unknown schedule kind: {self.kind}")

    def build(self) -> NoiseSchedule:
        return build_schedule(self.T, self.beta_start, self.beta_end, self.kind)  # type: ignore


def build_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02, kind: Literal["linear"] = "linear") -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    match kind:
        case "linear":
            betas = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
        case _:
            raise ValueError(f"Unknown schedule kind: {kind}")
    return NoiseSchedule.from_betas(betas)


def forward_noise(x0: Tensor, t: int | Tensor, eps: Tensor, sched: NoiseSchedule) -> Tensor:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps"""
    if eps.shape != x0.shape:
        raise ValueError(f"Shape mismatch: x0 {tuple(x0.shape)} vs eps {tuple(eps.shape)}")
    a = sched.gather(sched.alpha_bar, t, x0)
    return a.sqrt() * x0 + (1 - a).sqrt() * eps


def x0_from_eps(x_t: Tensor, t: int | Tensor, eps_hat: Tensor, sched: NoiseSchedule) -> Tensor:
    """Inverts the forward process given a noise estimate"""
    a = sched.gather(sched.alpha_bar, t, x_t)
    if bool((a < MIN_ALPHA_BAR).any()):
        raise ValueError(f"alpha_bar at t={t} is below {MIN_ALPHA_BAR}, the inversion is numerically singular")
    return (x_t - (1 - a).sqrt() * eps_hat) / a.sqrt()


@dataclass(frozen=True)
class StepCoefficients:
    """Coefficients of the reverse step from time t to time `prev` (t - 1 unless a strided chain is used).
    The step mean is x0_coef * x0_hat + xt_coef * x_t, with x0_hat the output of the backbone."""
    sqrt_alpha_bar: float
    sqrt_one_minus_alpha_bar: float
    beta_tilde: float
    x0_coef: float
    xt_coef: float


def posterior_step_mean_variance(t: int, sched: NoiseSchedule, prev: int | None = None) -> tuple[StepCoefficients, float]:
    """Coefficients of the reverse step at time t and its noise scale sigma_t = sqrt(beta_tilde_t).
    With prev < t - 1 the coefficients of the skip from t to prev are returned instead (prev = 0 is the clean image).
    The mean of the step itself is produced by the backbone."""
    sched.check_t(t)
    prev = int(t) - 1 if prev is None else int(prev)
    if not 0 <= prev < t:
        raise ValueError(f"Previous time index must lie in 0..{t - 1}, got {prev}")
    a = sched.alpha_bar[int(t) - 1].item()
    a_prev = sched.alpha_bar[prev - 1].item() if prev > 0 else 1.0
    beta = 1 - a / a_prev
    beta_tilde = (1 - a_prev) / (1 - a) * beta
    coefs = StepCoefficients(
        sqrt_alpha_bar=a ** 0.5,
        sqrt_one_minus_alpha_bar=(1 - a) ** 0.5,
        beta_tilde=beta_tilde,
        x0_coef=a_prev ** 0.5 * beta / (1 - a),
        xt_coef=(a / a_prev) ** 0.5 * (1 - a_prev) / (1 - a),
    )
    return coefs, beta_tilde ** 0.5
