"""Run configuration: one JSON file with full defaulting plus dot-path overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .unet import DenoiserConfig
from .windows import WindowSpec


@dataclass(frozen=True)
class DataConfig:
    n_train: int = 8
    n_holdout: int = 2
    T: int = 16
    N: int = 6
    H: int = 64
    W: int = 64
    blur_substeps: int = 8
    dof: int = 4


@dataclass(frozen=True)
class ScheduleConfig:
    t_steps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.035


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 2
    lr: float = 1e-3
    weight_decay: float = 0.01
    log_every: int = 50
    resume: str = ""
    checkpoint_name: str = "model.ckpt"


@dataclass(frozen=True)
class CheckerSection:
    mode: str = "oracle"
    endpoint: str = ""
    prompt_template_path: str = ""
    oracle_ssim_threshold: float = 0.80
    retries: int = 2
    objects: str = "the robot arm and the manipulated object"


@dataclass(frozen=True)
class EditSection:
    trajectory: str = "holdout_00"
    variant: str = "edited"  # which ground-truth variant provides the guidance frame
    guidance: str = ""  # explicit image path; empty = first head frame of the variant
    mask_source: str = "gt"  # "gt" | "none" | directory with mask PNGs
    seed: int = 0


@dataclass(frozen=True)
class RolloutSection:
    trajectory: str = "holdout_01"
    actions: str = ""  # JSON actions file; empty = ground-truth actions
    seed: int = 0


@dataclass(frozen=True)
class ServeSection:
    port: int = 8008
    host: str = "127.0.0.1"


@dataclass(frozen=True)
class RunConfig:
    dataset_root: str = "runs/dataset"
    out_dir: str = "runs/out"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    window: WindowSpec = field(default_factory=WindowSpec)
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    checker: CheckerSection = field(default_factory=CheckerSection)
    edit: EditSection = field(default_factory=EditSection)
    rollout: RolloutSection = field(default_factory=RolloutSection)
    serve: ServeSection = field(default_factory=ServeSection)


def _from_dict(cls, data: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if dataclasses.is_dataclass(f.type) if isinstance(f.type, type) else False:
            kwargs[f.name] = _from_dict(f.type, value)
        elif isinstance(value, dict):
            sub = _field_type(cls, f.name)
            kwargs[f.name] = _from_dict(sub, value)
        elif isinstance(value, list):
            kwargs[f.name] = tuple(value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


def _field_type(cls, name):
    for f in dataclasses.fields(cls):
        if f.name == name:
            default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
            return type(default)
    raise KeyError(name)


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def parse_override(pair: str) -> tuple[str, object]:
    if "=" not in pair:
        raise ValueError(f"override {pair!r} is not of the form key=value")
    key, raw = pair.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_override(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot descend into non-dict config key {part!r}")
    node[parts[-1]] = value


def load_config(path: str | Path | None = None, overrides: list | None = None) -> RunConfig:
    """Defaults, optionally updated from a JSON file, then --set overrides."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        data = json.loads(p.read_text())
    for pair in overrides or []:
        key, value = parse_override(pair)
        apply_override(data, key, value)
    return _from_dict(RunConfig, data)
