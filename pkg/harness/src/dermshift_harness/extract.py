"""Embedding extraction: frozen backbone, last hidden layer, one CSV row per image.

The backbone is a torchvision ResNet cut just before its classifier head, so
the emitted vector is the global-pooled last hidden layer (512-d for resnet18,
2048-d for resnet50). Extraction runs in eval mode under no_grad and is
deterministic for a fixed spec. When pretrained weights cannot be loaded
(offline hosts), the trunk falls back to a seeded random initialization and
the extraction manifest records pretrained=false.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .errors import ConfigError, DataError, DecodeError, MissingImage
from .io import write_embedding_csv

__all__ = [
    "BACKBONE_DIMS",
    "ExtractorSpec",
    "ExtractionResult",
    "build_backbone",
    "resolve_image_path",
    "load_image",
    "extract_embeddings",
]

BACKBONE_DIMS = {"resnet18": 512, "resnet50": 2048}
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class ExtractorSpec:
    """Backbone choice plus the preprocessing that fixes the output dim."""

    backbone: str = "resnet18"
    input_size: int = 224
    pretrained: bool = True
    init_seed: int = 0
    batch_size: int = 8

    def __post_init__(self):
        if self.backbone not in BACKBONE_DIMS:
            raise ConfigError(f"unknown backbone '{self.backbone}' (have: {', '.join(sorted(BACKBONE_DIMS))})")
        if self.input_size < 32:
            raise ConfigError("input_size must be at least 32")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")

    @property
    def dim(self) -> int:
        return BACKBONE_DIMS[self.backbone]


@dataclass(frozen=True)
class ExtractionResult:
    csv_text: str
    manifest: dict


def build_backbone(spec: ExtractorSpec) -> tuple[torch.nn.Module, bool]:
    """Frozen trunk ending at the last hidden layer; returns (trunk, pretrained_loaded)."""
    from torchvision import models

    ctor = {"resnet18": models.resnet18, "resnet50": models.resnet50}[spec.backbone]
    weights = {
        "resnet18": models.ResNet18_Weights.IMAGENET1K_V1,
        "resnet50": models.ResNet50_Weights.IMAGENET1K_V1,
    }[spec.backbone]
    model = None
    loaded = False
    if spec.pretrained:
        try:
            model = ctor(weights=weights)
            loaded = True
        except Exception:
            model = None
    if model is None:
        torch.manual_seed(spec.init_seed)
        model = ctor(weights=None)
    trunk = torch.nn.Sequential(*list(model.children())[:-1], torch.nn.Flatten(1))
    trunk.eval()
    for param in trunk.parameters():
        param.requires_grad_(False)
    return trunk, loaded


def resolve_image_path(image_dir: Path | str, image_id: str) -> Path:
    image_dir = Path(image_dir)
    tried = []
    for suffix in _IMAGE_SUFFIXES:
        candidate = image_dir / f"{image_id}{suffix}"
        if candidate.is_file():
            return candidate
        tried.append(candidate.name)
    raise MissingImage(image_id, tried)


def load_image(path: Path, input_size: int) -> np.ndarray:
    """Decode, resize and normalize one image to a (3, s, s) float32 array."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((input_size, input_size), Image.BILINEAR)
    except Exception as exc:
        raise DecodeError(f"{path.name}: {exc}") from None
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def load_image_batch(image_dir: Path | str, image_ids: Sequence[str], input_size: int) -> torch.Tensor:
    """Stack images for a list of ids into an (n, 3, s, s) tensor."""
    arrays = [load_image(resolve_image_path(image_dir, image_id), input_size) for image_id in image_ids]
    return torch.from_numpy(np.stack(arrays))


def extract_embeddings(
    image_dir: Path | str,
    image_ids: Sequence[str],
    spec: ExtractorSpec | None = None,
) -> ExtractionResult:
    """Embed every id into one CSV row; the manifest records what actually ran."""
    spec = spec or ExtractorSpec()
    image_ids = list(image_ids)
    if not image_ids:
        raise DataError("no image ids to extract")
    if len(set(image_ids)) != len(image_ids):
        raise DataError("duplicate image ids in extraction request")
    trunk, pretrained_loaded = build_backbone(spec)
    rows = []
    with torch.no_grad():
        for start in range(0, len(image_ids), spec.batch_size):
            chunk = image_ids[start : start + spec.batch_size]
            batch = load_image_batch(image_dir, chunk, spec.input_size)
            rows.append(trunk(batch).numpy().astype(np.float64))
    values = np.concatenate(rows, axis=0)
    csv_text = write_embedding_csv(image_ids, values)
    manifest = {
        "backbone": spec.backbone,
        "dim": spec.dim,
        "input_size": spec.input_size,
        "pretrained": pretrained_loaded,
        "init_seed": None if pretrained_loaded else spec.init_seed,
        "n_images": len(image_ids),
    }
    return ExtractionResult(csv_text=csv_text, manifest=manifest)
