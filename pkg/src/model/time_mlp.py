from __future__ import annotations
import torch
from torch import nn, Tensor

class TimeMLP(nn.Module):
    """Maps the normalized time index t / T to a latent vector through a stack of fully connected layers.
    Default: 12 layers of 32 units with SiLU in between and a linear last layer."""
    def __init__(self, num_layers: int = 12, width: int = 32):
        super().__init__()
        if num_layers < 1:
            raise ValueError(f"The time MLP needs at least one layer, got {num_layers}")
        self.width = width
        layers: list[nn.Module] = []
        for i in range(num_layers):
            layers.append(nn.Linear(1 if i == 0 else width, width))
            if i < num_layers - 1:
                layers.append(nn.SiLU())
        self.net = nn.Sequential(*layers)

    def forward(self, t: Tensor | int, T: int) -> Tensor:
        """t: int or (B,) tensor of time indices in 1..T. Returns (B, width)"""
        t = torch.as_tensor(t, device=self.net[0].weight.device)
        if t.ndim == 0:
            t = t.unsqueeze(0)
        if bool(((t < 1) | (t > T)).any()):
            raise ValueError(f"Time index out of range 1..{T}: {t.tolist()}")
        s = (t.to(self.net[0].weight.dtype) / T).unsqueeze(-1)
        return self.net(s)

def time_embed(t: Tensor | int, T: int, time_mlp: TimeMLP) -> Tensor:
    return time_mlp(t, T)
