"""Teacher/student self-training on unlabeled target images."""

from ..numerics import gumbel_softmax
from .adapt import (
    LOG_COLUMNS,
    AdaptResult,
    StepRecord,
    TargetData,
    adapt_run,
    adapt_step,
    hyperparam_metadata,
    read_log,
    route_through_wat,
)
from .geometry import ALL_TRANSFORMS, GeometricTransform, geometric_ensemble
from .losses import (
    FrozenExtractor,
    LossTerms,
    loss_high_D,
    loss_high_G,
    loss_low,
    loss_perceptual,
    loss_rec,
    total_loss,
)
from .state import (
    AdaptHyperParams,
    AdaptRngs,
    TeacherStudentState,
    build_network,
    ema_update,
    ema_update_params,
    infer_backbone_dims,
)
from .uncertainty import UncertaintyEstimate, confidence_map, estimate_uncertainty

__all__ = [
    "ALL_TRANSFORMS",
    "AdaptHyperParams",
    "AdaptResult",
    "AdaptRngs",
    "FrozenExtractor",
    "GeometricTransform",
    "LOG_COLUMNS",
    "LossTerms",
    "StepRecord",
    "TargetData",
    "TeacherStudentState",
    "UncertaintyEstimate",
    "adapt_run",
    "adapt_step",
    "build_network",
    "confidence_map",
    "ema_update",
    "ema_update_params",
    "estimate_uncertainty",
    "geometric_ensemble",
    "gumbel_softmax",
    "hyperparam_metadata",
    "infer_backbone_dims",
    "loss_high_D",
    "loss_high_G",
    "loss_low",
    "loss_perceptual",
    "loss_rec",
    "read_log",
    "route_through_wat",
    "total_loss",
]
