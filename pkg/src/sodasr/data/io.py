"""Image containers (8-bit PPM, lossless SRF32) and the dataset manifest."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SRF32_MAGIC = b"SRF32"


def _to_unit(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3:
        raise ValueError(f"expected an [H, W, C] image, got shape {img.shape}")
    return np.clip(img, 0.0, 1.0)


def write_ppm(path, img) -> None:
    img = _to_unit(img)
    if img.shape[-1] != 3:
        raise ValueError("PPM needs exactly 3 channels")
    h, w, _ = img.shape
    data = np.round(img * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def _ppm_tokens(blob: bytes, count: int):
    """First ``count`` header tokens and the offset just past the single whitespace after the last."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PPM header")
        tokens.append(blob[start:pos])
    return tokens, pos + 1


def read_ppm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    (magic, w, h, maxval), off = _ppm_tokens(blob, 4)
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {magic!r})")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    raw = np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=off)
    return (raw.reshape(h, w, 3).astype(np.float32) / 255.0)


def write_srf32(path, img) -> None:
    img = _to_unit(img)
    h, w, c = img.shape
    with open(path, "wb") as f:
        f.write(SRF32_MAGIC + struct.pack("<III", h, w, c))
        f.write(img.astype("<f4").tobytes())


def read_srf32(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:5] != SRF32_MAGIC:
        raise ValueError(f"{path}: bad SRF32 magic")
    h, w, c = struct.unpack("<III", blob[5:17])
    if len(blob) != 17 + 4 * h * w * c:
        raise ValueError(f"{path}: SRF32 payload size does not match its {h}x{w}x{c} header")
    data = np.frombuffer(blob, dtype="<f4", offset=17).reshape(h, w, c)
    return np.clip(data.astype(np.float32), 0.0, 1.0)


def read_image(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix == ".ppm":
        return read_ppm(path)
    if suffix == ".srf":
        return read_srf32(path)
    raise ValueError(f"unknown image format {suffix!r} for {path}")


def write_image(path, img) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".ppm":
        write_ppm(path, img)
    elif suffix == ".srf":
        write_srf32(path, img)
    else:
        raise ValueError(f"unknown image format {suffix!r} for {path}")


@dataclass(frozen=True)
class ManifestEntry:
    """One LR image.  Paired splits keep the HR image at the same path with ``/lr/`` replaced by ``/hr/``."""

    split: str
    path: str
    domain: str

    @property
    def hr_path(self) -> str:
        return self.path.replace("/lr/", "/hr/")


def write_manifest(path, entries) -> None:
    with open(path, "w") as f:
        f.write("# split path domain\n")
        for e in entries:
            f.write(f"{e.split} {e.path} {e.domain}\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'split path domain', got {line!r}")
            entries.append(ManifestEntry(*parts))
    return entries


class SRDataset:
    """Images listed in a manifest, loaded lazily and cached."""

    def __init__(self, root):
        self.root = Path(root)
        manifest = self.root / "manifest.txt"
        if not manifest.is_file():
            raise FileNotFoundError(f"no manifest at {manifest}")
        self.entries = read_manifest(manifest)
        self._cache: dict[str, np.ndarray] = {}

    def _load(self, rel: str) -> np.ndarray:
        if rel not in self._cache:
            self._cache[rel] = read_image(self.root / rel)
        return self._cache[rel]

    def select(self, domain: str, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.domain == domain and e.split == split]

    def lr_images(self, domain: str, split: str) -> list[np.ndarray]:
        return [self._load(e.path) for e in self.select(domain, split)]

    def pairs(self, domain: str, split: str) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for e in self.select(domain, split):
            if not os.path.isfile(self.root / e.hr_path):
                raise FileNotFoundError(f"{domain}/{split} image {e.path} has no HR partner at {e.hr_path}")
            out.append((self._load(e.path), self._load(e.hr_path)))
        return out
