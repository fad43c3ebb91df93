# Single-file checkpoints: named parameter arrays, optimizer state and a JSON header describing the architecture
# and the schedule the model was trained with. Written with torch.save into a temporary file and moved into place.

from __future__ import annotations
import os
import json
import logging
from dataclasses import dataclass, field
from typing import Any
import torch
from .lhan import LHAN, ModelConfig

logger = logging.getLogger(__name__)

FORMAT_TAG = "dmsm-checkpoint"
FORMAT_VERSION = 1

class CheckpointError(ValueError):
    pass

@dataclass
class Checkpoint:
    model: LHAN
    step: int
    header: dict[str, Any]
    optimizer_state: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

def save_checkpoint(
    path: str,
    model: LHAN,
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
    schedule: dict[str, Any] | None = None,
    extra: dict[str, Any] | None = None,
):
    header = {
        "model": model.config.to_dict(),
        "schedule": schedule or {},
        "step": int(step),
    }
    payload = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "header": json.dumps(header, sort_keys=True),
        "model": {k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "step": int(step),
        "extra": extra or {},
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)
    logger.debug(f"Saved checkpoint at step {step} to {path}")

def _read(path: str) -> dict[str, Any]:
    if not os.path.isfile(path):
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(f"Unreadable or truncated checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_TAG:
        raise CheckpointError(f"{path} is not a {FORMAT_TAG} file")
    if payload.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"Checkpoint version {payload.get('version')} is not supported (expected {FORMAT_VERSION})")
    return payload

def read_header(path: str) -> dict[str, Any]:
    return json.loads(_read(path)["header"])

def load_checkpoint(path: str, config: ModelConfig | None = None, device: str = "cpu") -> Checkpoint:
    """Loads a checkpoint. If `config` is given it must equal the stored architecture, including the
    shape-free switches such as use_dc. Otherwise the model is built from the stored header."""
    payload = _read(path)
    try:
        header = json.loads(payload["header"])
        stored = ModelConfig(**header["model"])
    except Exception as e:
        raise CheckpointError(f"Corrupted checkpoint header in {path}: {e}") from e
    if config is not None and config != stored:
        diff = [
            f"{k}: checkpoint {v} vs config {getattr(config, k)}"
            for k, v in vars(stored).items() if getattr(config, k) != v
        ]
        raise CheckpointError(f"Checkpoint {path} was trained with a different architecture: " + "; ".join(diff))

    model = LHAN(config or stored)
    expected = model.state_dict()
    state = payload["model"]
    problems = []
    for name, tensor in expected.items():
        if name not in state:
            problems.append(f"missing {name}")
        elif tuple(state[name].shape) != tuple(tensor.shape):
            problems.append(f"{name}: checkpoint {tuple(state[name].shape)} vs model {tuple(tensor.shape)}")
    problems.extend(f"unexpected {name}" for name in state if name not in expected)
    if problems:
        raise CheckpointError(f"Checkpoint {path} does not match the model architecture: " + "; ".join(problems))

    model.load_state_dict(state)
    model.to(device)
    return Checkpoint(
        model=model,
        step=int(payload["step"]),
        header=header,
        optimizer_state=payload.get("optimizer"),
        extra=payload.get("extra") or {},
    )
