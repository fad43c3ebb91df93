from __future__ import annotations
import math
import torch
from torch import nn, Tensor

STD_GUARD = 1e-8

def sinusoidal_encoding(length: int, dim: int, device=None, dtype=torch.float32) -> Tensor:
    """(length, dim) fixed sinusoidal positional encoding"""
    pos = torch.arange(length, device=device, dtype=torch.float64).unsqueeze(1)
    freq = torch.exp(-math.log(10000.0) * torch.arange(0, dim, 2, device=device, dtype=torch.float64) / dim)
    pe = torch.zeros(length, dim, device=device, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq[: dim // 2])
    return pe.to(dtype)

def channel_normalize(x: Tensor) -> Tensor:
    """(x - mean) / std per channel over the spatial positions. Channels whose std is below 1e-8 map to zero,
    so that they pass through the residual connection unchanged."""
    mu = x.mean(dim=(-2, -1), keepdim=True)
    std = x.std(dim=(-2, -1), keepdim=True, unbiased=False)
    flat = std < STD_GUARD
    return torch.where(flat, torch.zeros_like(x), (x - mu) / std.clamp_min(STD_GUARD))

class CATB(nn.Module):
    """Cross-attention of image tokens (queries) against the time embedding (a single key/value token).
    The attention output is projected to a per-channel scale that modulates the channel-normalized features,
    and the result is added back onto the input. The scale projection starts at zero, so a fresh block is the identity."""
    def __init__(self, channels: int, time_dim: int = 32, attn_dim: int = 32):
        super().__init__()
        self.channels = channels
        self.time_dim = time_dim
        self.attn_dim = attn_dim
        self.query = nn.Linear(channels, attn_dim)
        self.key = nn.Linear(time_dim, attn_dim)
        self.value = nn.Linear(time_dim, attn_dim)
        # The time token has no spatial position; it gets a learned offset in place of a positional code
        self.key_bias = nn.Parameter(torch.zeros(time_dim))
        self.alpha = nn.Linear(attn_dim, channels)
        nn.init.zeros_(self.alpha.weight)
        nn.init.zeros_(self.alpha.bias)

    def attention(self, o_n: Tensor, w: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (att, weights) with shapes (B, H*W, attn_dim) and (B, H*W, 1)"""
        if o_n.ndim != 4 or o_n.size(1) != self.channels:
            raise ValueError(f"CATB expects (B, {self.channels}, H, W), got {tuple(o_n.shape)}")
        if w.ndim != 2 or w.size(-1) != self.time_dim:
            raise ValueError(f"CATB expects a (B, {self.time_dim}) time embedding, got {tuple(w.shape)}")
        b, c, h, wd = o_n.shape
        tokens = o_n.flatten(2).transpose(1, 2)
        tokens = tokens + sinusoidal_encoding(h * wd, c, device=o_n.device, dtype=o_n.dtype)
        q = self.query(tokens)
        k = self.key(w + self.key_bias).unsqueeze(1)
        v = self.value(w).unsqueeze(1)
        scores = q @ k.transpose(1, 2) / math.sqrt(self.attn_dim)
        weights = torch.softmax(scores, dim=-1)
        return weights @ v, weights

    def forward(self, o_n: Tensor, w: Tensor) -> Tensor:
        att, _ = self.attention(o_n, w)
        b, c, h, wd = o_n.shape
        scale = self.alpha(att).transpose(1, 2).reshape(b, c, h, wd)
        return scale * channel_normalize(o_n) + o_n

def catb_forward(o_n: Tensor, w: Tensor, block: CATB) -> Tensor:
    return block(o_n, w)
