"""Hyper-parameters and the mutable teacher/student training state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from ..backbone import Discriminator, ToySRNet
from ..errors import CheckpointError, ConfigError
from ..numerics import Adam
from ..wat import WaveletAugmentationTransformer
from .losses import FrozenExtractor


@dataclass
class AdaptHyperParams:
    eta: float = 0.999
    tau: float = 0.1
    n_passes: int = 5
    alpha: float = 0.0004
    beta: float = 1.5
    lambda1: float = 0.01
    lambda2: float = 0.1
    lambda3: float = 0.005
    l1: int = 1
    l2: int = 3
    wat_probability: float = 0.5
    patch: int = 48
    batch: int = 8
    iterations: int = 2000
    lr_generator: float = 1e-4
    lr_discriminator: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    scale: int = 4
    eval_interval: int = 100
    ensemble: bool = True
    use_uncertainty: bool = True
    perceptual_depth: int = 1
    compensate_gain: bool = True
    eval_model: str = "student"
    wat_levels: tuple[int, ...] = (1, 2, 3, 4)
    wat_heads: int = 4
    wat_points: int = 4
    wat_fusion: str = "mean"

    def __post_init__(self):
        self.wat_levels = tuple(int(v) for v in self.wat_levels)
        self.validate()

    def validate(self) -> None:
        positive = ("tau", "n_passes", "alpha", "beta", "patch", "batch", "lr_generator", "lr_discriminator",
                    "scale", "eval_interval", "wat_heads", "wat_points")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda1", "lambda2", "lambda3", "iterations", "perceptual_depth"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.wat_probability <= 1.0:
            raise ConfigError(f"wat_probability must lie in [0, 1], got {self.wat_probability}")
        if self.n_passes < 2:
            raise ConfigError(f"n_passes must be at least 2, got {self.n_passes}")
        if self.l1 < 1 or 2 ** (self.l2 - self.l1) != self.scale:
            raise ConfigError(f"l2 - l1 must equal log2(scale) = {math.log2(self.scale):g}, got l1={self.l1}, l2={self.l2}")
        if self.patch % 2 ** max(self.l1, max(self.wat_levels)):
            raise ConfigError(f"patch {self.patch} must be divisible by 2**{max(self.l1, max(self.wat_levels))}")
        if self.eval_model not in ("student", "teacher"):
            raise ConfigError(f"eval_model must be 'student' or 'teacher', got {self.eval_model!r}")
        if self.wat_fusion not in ("mean", "sum"):
            raise ConfigError(f"wat_fusion must be 'mean' or 'sum', got {self.wat_fusion!r}")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class AdaptRngs:
    """One generator per source of randomness so ablations share streams."""

    gumbel: np.random.Generator
    routing: np.random.Generator
    data: np.random.Generator
    init: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> AdaptRngs:
        return cls(*(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)))


def source_prefix(state: dict[str, np.ndarray]) -> str:
    return "student." if any(k.startswith("student.") for k in state) else ""


def infer_backbone_dims(state: dict[str, np.ndarray]) -> tuple[int, int]:
    """``(channels, blocks)`` of a ToySRNet checkpoint."""
    prefix = source_prefix(state)
    key = prefix + "head.weight"
    if key not in state:
        raise CheckpointError(f"checkpoint has no {key!r}; not a ToySRNet checkpoint")
    channels = int(state[key].shape[-1])
    blocks = len({k.split(".")[len(prefix.split(".")) : len(prefix.split(".")) + 1][0]
                  for k in state if k.startswith(prefix + "body.")})
    return channels, blocks


def build_network(state: dict[str, np.ndarray], scale: int, dtype=np.float32) -> ToySRNet:
    channels, blocks = infer_backbone_dims(state)
    net = ToySRNet(np.random.default_rng(0), channels=channels, blocks=blocks, scale=scale, dtype=dtype)
    net.load_state_dict(state, prefix=source_prefix(state))
    return net


@dataclass
class TeacherStudentState:
    teacher: ToySRNet
    student: ToySRNet
    wat: WaveletAugmentationTransformer
    discriminator: Discriminator
    extractor: FrozenExtractor
    eta: float
    opt_generator: Adam
    opt_discriminator: Adam
    iteration: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def from_source(cls, source_state: dict[str, np.ndarray], hp: AdaptHyperParams, rng: np.random.Generator,
                    dtype=np.float32) -> TeacherStudentState:
        teacher = build_network(source_state, hp.scale, dtype)
        student = build_network(source_state, hp.scale, dtype)
        extractor = FrozenExtractor(build_network(source_state, hp.scale, dtype), hp.perceptual_depth)
        c = student.channels
        wat = WaveletAugmentationTransformer(c, rng, hp.wat_levels, hp.wat_heads, hp.wat_points, hp.wat_fusion,
                                             dtype=dtype)
        disc = Discriminator(9, rng, dtype=dtype)
        teacher.requires_grad_(False)
        betas = (hp.adam_beta1, hp.adam_beta2)
        opt_g = Adam(list(student.named_parameters("student.")) + list(wat.named_parameters("wat.")),
                     lr=hp.lr_generator, betas=betas)
        opt_d = Adam(disc.named_parameters("disc."), lr=hp.lr_discriminator, betas=betas)
        return cls(teacher, student, wat, disc, extractor, hp.eta, opt_g, opt_d)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.student.state_dict("student."))
        out.update(self.teacher.state_dict("teacher."))
        out.update(self.wat.state_dict("wat."))
        out.update(self.discriminator.state_dict("disc."))
        return out


def ema_update_params(teacher, student, eta: float) -> None:
    """``teacher <- eta * teacher + (1 - eta) * student`` parameter by parameter, in place."""
    tp, sp = teacher.named_parameters(), student.named_parameters()
    for (nt, pt), (ns, ps) in zip(tp, sp):
        if nt != ns or pt.shape != ps.shape:
            raise ConfigError(f"teacher/student mismatch at {nt} vs {ns}")
        pt.data *= eta
        pt.data += (1.0 - eta) * ps.data


def ema_update(state: TeacherStudentState) -> TeacherStudentState:
    """EMA of the student backbone into the teacher; the WAT has no teacher counterpart."""
    ema_update_params(state.teacher, state.student, state.eta)
    return state
