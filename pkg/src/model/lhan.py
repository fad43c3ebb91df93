from __future__ import annotations
from dataclasses import dataclass, field, asdict
import torch
from torch import nn, Tensor
from .pab import PAB
from .time_mlp import TimeMLP
from .catb import CATB

@dataclass
class ModelConfig:
    channels: int = 32
    n_pab: int = 5
    kernel_size: int = 3
    concat_blocks: tuple[int, ...] = field(default=(1, 3, 5))
    time_layers: int = 12
    time_dim: int = 32
    attn_dim: int = 32
    use_dc: bool = True

    def __post_init__(self):
        self.concat_blocks = tuple(int(i) for i in self.concat_blocks)
        if self.channels < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if self.n_pab < 0:
            raise ValueError(f"n_pab must be nonnegative, got {self.n_pab}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be a positive odd number, got {self.kernel_size}")
        if any(i < 0 for i in self.concat_blocks):
            raise ValueError(f"concat_blocks must be nonnegative block indices, got {self.concat_blocks}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["concat_blocks"] = list(self.concat_blocks)
        return d

    @property
    def selected_blocks(self) -> tuple[int, ...]:
        """Indices into [lifted input, PAB 1, ..., PAB n] whose outputs are concatenated.
        Blocks beyond n_pab are skipped; if nothing is left the last available output is used."""
        chosen = tuple(i for i in self.concat_blocks if i <= self.n_pab)
        return chosen if chosen else (self.n_pab,)


class LHAN(nn.Module):
    """Light-weight hybrid attention network: predicts the 2-channel noise from the 2-channel noisy image
    stacked with the 2-channel conditioning image.

    lift conv (4 -> c) -> n_pab PABs -> concat selected block outputs -> 1x1 fuse conv -> CATB(time) -> head conv (c -> 2)"""
    IN_CHANNELS = 4
    OUT_CHANNELS = 2

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config = config or ModelConfig()
        c, k = config.channels, config.kernel_size
        self.lift = nn.Conv2d(self.IN_CHANNELS, c, k, padding=k // 2)
        self.pabs = nn.ModuleList([PAB(c, k) for _ in range(config.n_pab)])
        self.fuse = nn.Conv2d(c * len(config.selected_blocks), c, 1)
        self.time_mlp = TimeMLP(config.time_layers, config.time_dim)
        self.catb = CATB(c, config.time_dim, config.attn_dim)
        self.head = nn.Conv2d(c, self.OUT_CHANNELS, k, padding=k // 2)

    def forward(self, x: Tensor, t: Tensor | int, T: int) -> Tensor:
        if x.ndim != 4 or x.size(1) != self.IN_CHANNELS:
            raise ValueError(f"LHAN expects (B, {self.IN_CHANNELS}, H, W), got {tuple(x.shape)}")
        outputs = [self.lift(x)]
        for block in self.pabs:
            outputs.append(block(outputs[-1]))
        o_n = self.fuse(torch.cat([outputs[i] for i in self.config.selected_blocks], dim=1))
        w = self.time_mlp(t, T)
        if w.size(0) == 1 and x.size(0) > 1:
            w = w.expand(x.size(0), -1)
        return self.head(self.catb(o_n, w))


def lhan_forward(x_in: Tensor, t: Tensor | int, model: LHAN, T: int) -> Tensor:
    return model(x_in, t, T)

def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)

def parameter_breakdown(model: LHAN) -> dict[str, int]:
    """Parameter count per top-level component"""
    return {name: count_parameters(child) for name, child in model.named_children()}
