from __future__ import annotations
import torch
from torch import nn, Tensor

def symmetric_activation(x: Tensor) -> Tensor:
    """Sigmoid(x) - 0.5. Odd, monotone and bounded by 0.5 in magnitude"""
    return torch.sigmoid(x) - 0.5

class PAB(nn.Module):
    """Parameter-free attention block.

    H = sigmoid(W2 * sigmoid(W1 * O)), V = sigmoid(H) - 0.5, output = (O + H) * V
    The attention V carries no parameters of its own: everything learnable is in the two convolutions."""
    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, channels, kernel_size, padding=kernel_size // 2)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size, padding=kernel_size // 2)

    def features(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (H, V)"""
        if x.ndim != 4 or x.size(1) != self.channels:
            raise ValueError(f"PAB expects (B, {self.channels}, H, W), got {tuple(x.shape)}")
        h = torch.sigmoid(self.conv2(torch.sigmoid(self.conv1(x))))
        return h, symmetric_activation(h)

    def forward(self, x: Tensor) -> Tensor:
        h, v = self.features(x)
        return (x + h) * v

def pab_forward(o_prev: Tensor, block: PAB) -> Tensor:
    return block(o_prev)
