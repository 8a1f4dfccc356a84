"""Run configuration: a flat ``key = value`` text format with ``#`` comments."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .data import DatasetLayout
from .errors import ConfigError
from .selftrain import AdaptHyperParams

ABLATIONS = ("no_wat", "no_ema", "no_ue", "no_reg")


class ConfigParseError(ConfigError):
    """A config file line could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path is not None else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


_HP = AdaptHyperParams()


@dataclass
class RunConfig:
    # paths
    data_dir: str = "data"
    source_checkpoint: str = "runs/source.ckpt"
    out_dir: str = "runs/adapt"
    checkpoint: str = ""  # model evaluated by eval/infer; defaults to the adapted checkpoint
    input: str = ""  # infer: LR image
    output: str = ""  # infer: SR image (.ppm)
    # reproducibility
    seed: int = 0
    dtype: str = "float32"
    # backbone
    channels: int = 32
    blocks: int = 4
    scale: int = 4
    # dataset layout
    hr_size: int = 256
    source_train: int = 64
    target_train: int = 64
    target_val: int = 16
    target_test: int = 16
    image_format: str = "srf"
    # source pre-training
    source_iterations: int = 2000
    source_lr: float = 1e-3
    source_batch: int = 8
    source_schedule: str = "cosine"
    # adaptation
    eta: float = _HP.eta
    tau: float = _HP.tau
    n_passes: int = _HP.n_passes
    alpha: float = _HP.alpha
    beta: float = _HP.beta
    lambda1: float = _HP.lambda1
    lambda2: float = _HP.lambda2
    lambda3: float = _HP.lambda3
    l1: int = _HP.l1
    l2: int = _HP.l2
    wat_probability: float = _HP.wat_probability
    patch: int = _HP.patch
    batch: int = _HP.batch
    iterations: int = _HP.iterations
    lr_generator: float = _HP.lr_generator
    lr_discriminator: float = _HP.lr_discriminator
    adam_beta1: float = _HP.adam_beta1
    adam_beta2: float = _HP.adam_beta2
    eval_interval: int = _HP.eval_interval
    ensemble: bool = _HP.ensemble
    use_uncertainty: bool = _HP.use_uncertainty
    perceptual_depth: int = _HP.perceptual_depth
    compensate_gain: bool = _HP.compensate_gain
    eval_model: str = _HP.eval_model
    wat_levels: tuple[int, ...] = _HP.wat_levels
    wat_heads: int = _HP.wat_heads
    wat_points: int = _HP.wat_points
    wat_fusion: str = _HP.wat_fusion
    # ablations
    no_wat: bool = False
    no_ema: bool = False
    no_ue: bool = False
    no_reg: bool = False

    def validate(self) -> RunConfig:
        if self.hr_size <= 0 or self.hr_size % 64:
            raise ConfigError(f"hr_size must be a positive multiple of 64, got {self.hr_size}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.source_schedule not in ("constant", "cosine"):
            raise ConfigError(f"source_schedule must be constant or cosine, got {self.source_schedule!r}")
        if self.image_format not in ("srf", "ppm"):
            raise ConfigError(f"image_format must be srf or ppm, got {self.image_format!r}")
        for name in ("channels", "blocks", "source_batch", "source_lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("source_train", "target_train", "target_val", "target_test", "source_iterations"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.channels % self.wat_heads:
            raise ConfigError(f"channels {self.channels} must be divisible by wat_heads {self.wat_heads}")
        self.hyperparams()
        return self

    @property
    def np_dtype(self):
        return np.dtype(self.dtype).type

    def layout(self) -> DatasetLayout:
        return DatasetLayout(self.hr_size, self.source_train, self.target_train, self.target_val, self.target_test,
                             self.image_format)

    def ablations(self) -> list[str]:
        return [a for a in ABLATIONS if getattr(self, a)]

    def hyperparams(self) -> AdaptHyperParams:
        """Adaptation hyper-parameters with the ablation switches applied."""
        kw = {f.name: getattr(self, f.name) for f in fields(AdaptHyperParams)}
        if self.no_wat:
            kw["wat_probability"] = 0.0
        if self.no_ema:
            kw["eta"] = 1.0
        if self.no_ue:
            kw["use_uncertainty"] = False
        if self.no_reg:
            kw["lambda2"] = kw["lambda3"] = 0.0
        return AdaptHyperParams(**kw)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = ["# resolved run configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_text())


FIELD_TYPES = typing.get_type_hints(RunConfig)
FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(key: str, text: str):
    """Convert the string form of ``key`` to its field type; ValueError on failure."""
    kind = FIELD_TYPES[key]
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean for {key}, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    # tuple[int, ...]
    parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
    if not parts:
        raise ValueError(f"expected a comma-separated list for {key}, got {text!r}")
    return tuple(int(p) for p in parts)


def parse_config_text(text: str, path=None) -> dict:
    """Overrides from ``key = value`` lines; unknown keys and malformed lines raise with the line number."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", n, path)
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in FIELD_TYPES:
            raise ConfigParseError(f"unknown key {key!r}", n, path)
        if key in out:
            raise ConfigParseError(f"duplicate key {key!r}", n, path)
        try:
            out[key] = parse_value(key, value)
        except ValueError as exc:
            raise ConfigParseError(str(exc), n, path) from None
    return out


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return RunConfig(**parse_config_text(path.read_text(), path))
