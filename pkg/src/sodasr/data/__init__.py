"""Synthetic cross-degradation data, image I/O, patch sampling, pre-training and metrics."""

from .degrade import (
    SOURCE_DEGRADATION,
    TARGET_DEGRADATION,
    DegradationSpec,
    bicubic_resize,
    cubic_kernel,
    degrade,
    gaussian_blur,
    gaussian_kernel1d,
    resize_matrix,
)
from .generate import DatasetLayout, generate_dataset, image_rngs
from .io import (
    ManifestEntry,
    SRDataset,
    read_image,
    read_manifest,
    read_ppm,
    read_srf32,
    write_image,
    write_manifest,
    write_ppm,
    write_srf32,
)
from .metrics import psnr_y, ssim
from .patches import PatchBatch, extract_patches
from .pretrain import SourceTrainResult, evaluate_model, learning_rate, super_resolve, train_source
from .synth import synthesize_hr

__all__ = [
    "SOURCE_DEGRADATION", "TARGET_DEGRADATION", "DatasetLayout", "DegradationSpec", "ManifestEntry", "PatchBatch", "SRDataset",
    "SourceTrainResult", "bicubic_resize", "cubic_kernel", "degrade", "evaluate_model", "extract_patches",
    "gaussian_blur", "gaussian_kernel1d", "generate_dataset", "image_rngs", "psnr_y", "read_image", "read_manifest", "read_ppm", "read_srf32",
    "learning_rate", "resize_matrix", "ssim", "super_resolve", "synthesize_hr", "train_source", "write_image", "write_manifest",
    "write_ppm", "write_srf32",
]
