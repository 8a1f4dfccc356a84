"""Write the synthetic source/target domains to disk with a manifest."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .degrade import SOURCE_DEGRADATION, TARGET_DEGRADATION, DegradationSpec, degrade
from .io import ManifestEntry, write_image, write_manifest
from .synth import synthesize_hr

DOMAIN_IDS = {"source": 0, "target": 1}
SPLIT_IDS = {"train": 0, "val": 1, "test": 2}


@dataclass(frozen=True)
class DatasetLayout:
    hr_size: int = 256
    source_train: int = 64
    target_train: int = 64
    target_val: int = 16
    target_test: int = 16
    image_format: str = "srf"

    def plan(self):
        """``(domain, split, count, paired)`` for every split that is written."""
        return [
            ("source", "train", self.source_train, True),
            ("target", "train", self.target_train, False),
            ("target", "val", self.target_val, True),
            ("target", "test", self.target_test, True),
        ]


def image_rngs(seed: int, domain: str, split: str, index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for the HR content and the degradation noise of one image.

    Keyed on ``(seed, domain, split, index)`` so no two images share a stream.
    """
    content, noise = np.random.SeedSequence([seed, DOMAIN_IDS[domain], SPLIT_IDS[split], index]).spawn(2)
    return np.random.default_rng(content), np.random.default_rng(noise)


def generate_dataset(root, layout: DatasetLayout = DatasetLayout(), seed: int = 0,
                     degradations: dict[str, DegradationSpec] | None = None) -> list[ManifestEntry]:
    root = Path(root)
    degradations = degradations or {"source": SOURCE_DEGRADATION, "target": TARGET_DEGRADATION}
    ext = "." + layout.image_format
    entries = []
    for domain, split, count, paired in layout.plan():
        spec = degradations[domain]
        for i in range(count):
            content_rng, noise_rng = image_rngs(seed, domain, split, i)
            hr = synthesize_hr(1, layout.hr_size, content_rng, spec.scale)[0]
            lr = degrade(hr, spec, noise_rng)
            rel = f"{domain}/{split}/lr/{i:04d}{ext}"
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            write_image(root / rel, lr)
            if paired:
                hr_rel = rel.replace("/lr/", "/hr/")
                (root / hr_rel).parent.mkdir(parents=True, exist_ok=True)
                write_image(root / hr_rel, hr)
            entries.append(ManifestEntry(split, rel, domain))
    write_manifest(root / "manifest.txt", entries)
    return entries
