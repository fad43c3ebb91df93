# Run configuration: one JSON file with a section per concern, validated strictly before any work is done
# Overrides use dotted keys, e.g. "train.steps=10" or "inference.paths=1"

from __future__ import annotations
import json
from dataclasses import dataclass, field, fields, asdict
from typing import Any
from .diffusion.schedule import ScheduleConfig
from .diffusion.sampling import InferenceConfig
from .model.lhan import ModelConfig
from .training.losses import LossWeights
from .training.trainer import TrainConfig

class ConfigError(ValueError):
    pass

@dataclass
class DataConfig:
    root: str = "data/desk"
    shape: tuple[int, int] = (64, 64)
    n_train: int = 20
    n_val: int = 5
    n_test: int = 5
    n_coils: int = 5
    accelerations: tuple[float, ...] = (4.0, 8.0)
    acs_lines: int = 12
    seed: int = 0

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)  # type: ignore
        self.accelerations = tuple(float(r) for r in self.accelerations)
        if len(self.shape) != 2 or min(self.shape) < 16:
            raise ValueError(f"shape must be two sides of at least 16 pixels, got {self.shape}")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ValueError("Split sizes must be nonnegative")
        if self.n_coils < 1:
            raise ValueError(f"n_coils must be positive, got {self.n_coils}")
        if not self.accelerations or min(self.accelerations) < 1:
            raise ValueError(f"accelerations must be a nonempty list of values >= 1, got {self.accelerations}")


@dataclass
class EvalConfig:
    foreground_fraction: float | None = 0.05
    baseline: bool = True

    def __post_init__(self):
        if self.foreground_fraction is not None and not 0 <= self.foreground_fraction < 1:
            raise ValueError(f"foreground_fraction must lie in [0, 1) or be null, got {self.foreground_fraction}")


SECTIONS: dict[str, type] = {
    "data": DataConfig,
    "schedule": ScheduleConfig,
    "model": ModelConfig,
    "loss": LossWeights,
    "train": TrainConfig,
    "inference": InferenceConfig,
    "eval": EvalConfig,
}
SCALARS = ("out_dir", "log_level")

@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = "runs/desk"
    log_level: str = "INFO"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError(f"A run configuration must be a JSON object, got {type(d).__name__}")
        unknown = set(d) - set(SECTIONS) - set(SCALARS)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {k: d[k] for k in SCALARS if k in d}
        for name, section in SECTIONS.items():
            values = d.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"Section '{name}' must be an object")
            allowed = {f.name for f in fields(section)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"Unknown keys in section '{name}': {sorted(bad)}")
            try:
                kwargs[name] = section(**values)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Invalid section '{name}': {e}") from e
        for k in SCALARS:
            if k in kwargs and not isinstance(kwargs[k], str):
                raise ConfigError(f"'{k}' must be a string")
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> RunConfig:
        try:
            with open(path) as f:
                d = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        return cls.from_dict(d)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {}
        for name in SECTIONS:
            section = getattr(self, name)
            d[name] = section.to_dict() if hasattr(section, "to_dict") else asdict(section)
        for k in SCALARS:
            d[k] = getattr(self, k)
        return json.loads(json.dumps(d))

    def to_json(self, path: str):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text

def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Returns a new config with "section.key=value" overrides applied. Values are parsed as JSON when possible."""
    d = cfg.to_dict()
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"Malformed override '{item}', expected key=value")
        parts = key.strip().split(".")
        if len(parts) == 1 and parts[0] in SCALARS:
            d[parts[0]] = _parse_value(value)
            continue
        if len(parts) != 2 or parts[0] not in SECTIONS:
            raise ConfigError(f"Unknown configuration key '{key}'")
        section, name = parts
        if name not in {f.name for f in fields(SECTIONS[section])}:
            raise ConfigError(f"Unknown key '{name}' in section '{section}'")
        d[section][name] = _parse_value(value)
    return RunConfig.from_dict(d)
