"""Synthetic dermoscopy-like corpora with controllable shift.

Generates small procedural images (an elliptical lesion blob over a
textured skin tone) paired with a catalog, then applies a parametric
appearance shift: hue rotation in HSV first, then contrast scaling and
brightness offset in RGB, then pixel noise, then clamping to [0, 1].
Corpora are paired by construction: the same base_seed yields the same
underlying scenes, so two corpora differ only by the applied shift.

These corpora back validation oracles: divergence metrics must respond
monotonically to increasing shift, and the synthetic discriminator
scores give AUROCs that grow with separation while a corpus compared
against itself stays near chance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .divergence import (
    BootstrapConfig,
    DivergenceInputs,
    DivergenceSummary,
    MetricKind,
    bootstrap_divergence,
    histogram,
)
from .embeddings import EmbeddingMatrix
from .errors import DataError
from .grouping import AgeCond, GroupRule, GroupedDataset, ShiftFlags
from .imagestats import RgbImage, STAT_NAMES, hsv_to_rgb, image_stats, rgb_to_hsv
from .metadata import Catalog, Diagnosis, MetadataRecord
from .metrics import PredictionSet

DEFAULT_IMAGE_SIZE = 64


@dataclass(frozen=True)
class ShiftSpec:
    """Parametric appearance shift; the default is the identity."""

    brightness_offset: float = 0.0
    contrast_scale: float = 1.0
    hue_rotation_deg: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not -0.5 <= self.brightness_offset <= 0.5:
            raise DataError(f"brightness_offset {self.brightness_offset} outside [-0.5, 0.5]")
        if self.contrast_scale <= 0.0:
            raise DataError(f"contrast_scale must be > 0, got {self.contrast_scale}")
        if self.noise_sigma < 0.0:
            raise DataError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def is_identity(self) -> bool:
        return (
            self.brightness_offset == 0.0
            and self.contrast_scale == 1.0
            and self.hue_rotation_deg == 0.0
            and self.noise_sigma == 0.0
        )


@dataclass(frozen=True)
class SynthCorpus:
    images: tuple[RgbImage, ...]
    catalog: Catalog
    shift: ShiftSpec

    def image_of(self) -> dict[str, RgbImage]:
        return {rec.image_id: img for rec, img in zip(self.catalog.records, self.images)}


def _base_scene(rng: np.random.Generator, size: int) -> np.ndarray:
    """One lesion-on-skin scene as float RGB in [0, 1]."""
    base = np.array(
        [rng.uniform(0.65, 0.85), rng.uniform(0.45, 0.62), rng.uniform(0.33, 0.5)]
    )
    img = np.broadcast_to(base, (size, size, 3)).copy()

    # low-frequency skin texture
    coarse = rng.normal(0.0, 0.035, size=(size // 8, size // 8, 1))
    img += np.kron(coarse, np.ones((8, 8, 1)))

    # elliptical lesion with a soft edge
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size / 2.0 + rng.uniform(-size / 10.0, size / 10.0)
    cx = size / 2.0 + rng.uniform(-size / 10.0, size / 10.0)
    ry = rng.uniform(size / 6.0, size / 3.5)
    rx = rng.uniform(size / 6.0, size / 3.5)
    theta = rng.uniform(0.0, np.pi)
    yr = (yy - cy) * np.cos(theta) + (xx - cx) * np.sin(theta)
    xr = -(yy - cy) * np.sin(theta) + (xx - cx) * np.cos(theta)
    dist = np.sqrt((yr / ry) ** 2 + (xr / rx) ** 2)
    membership = 1.0 / (1.0 + np.exp((dist - 1.0) * 10.0))

    lesion = base * np.array(
        [rng.uniform(0.35, 0.55), rng.uniform(0.25, 0.45), rng.uniform(0.25, 0.45)]
    )
    img = img * (1.0 - membership[..., None]) + lesion * membership[..., None]

    img += rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _apply_shift(scene: np.ndarray, shift: ShiftSpec, rng: np.random.Generator) -> np.ndarray:
    x = scene
    if shift.hue_rotation_deg != 0.0:
        h, s, v = rgb_to_hsv(RgbImage((x * 255.0).round().astype(np.uint8)))
        x = hsv_to_rgb((h + shift.hue_rotation_deg) % 360.0, s, v)
    if shift.contrast_scale != 1.0 or shift.brightness_offset != 0.0:
        x = (x - 0.5) * shift.contrast_scale + 0.5 + shift.brightness_offset
    if shift.noise_sigma > 0.0:
        x = x + rng.normal(0.0, shift.noise_sigma, size=x.shape)
    return np.clip(x, 0.0, 1.0)


def gen_corpus(
    n: int,
    base_seed: int,
    shift: ShiftSpec = ShiftSpec(),
    size: int = DEFAULT_IMAGE_SIZE,
    source_name: str = "SYNTH",
) -> SynthCorpus:
    """Generate n images plus catalog. Identity shift reproduces the base
    corpus bit for bit; scenes depend only on (base_seed, index, size).

    Classes alternate nevus/melanoma by index; every record is adult
    with a body localization so the whole corpus lands in one default
    dataset per origin (the origin label is source_name).
    """
    if n < 1:
        raise DataError(f"need n >= 1, got {n}")
    images: list[RgbImage] = []
    records: list[MetadataRecord] = []
    for i in range(n):
        scene_rng = np.random.default_rng([base_seed, i])
        scene = _base_scene(scene_rng, size)
        if not shift.is_identity:
            shift_rng = np.random.default_rng([shift.seed, base_seed, i])
            scene = _apply_shift(scene, shift, shift_rng)
        images.append(RgbImage((scene * 255.0).round().astype(np.uint8)))
        diagnosis = Diagnosis.NEVUS if i % 2 == 0 else Diagnosis.MELANOMA
        records.append(
            MetadataRecord(
                image_id=f"{source_name}_{i:05d}",
                diagnosis=diagnosis,
                origin=source_name,
                localization_raw="torso",
                age_years=int(31 + (i * 7) % 50),
                sex=None,
            )
        )
    catalog = Catalog(records=tuple(records), source_name=source_name)
    return SynthCorpus(images=tuple(images), catalog=catalog, shift=shift)


def corpus_group(corpus: SynthCorpus) -> GroupedDataset:
    """The whole corpus as a single dataset, for direct comparisons."""
    counts = {Diagnosis.MELANOMA.value: 0, Diagnosis.NEVUS.value: 0}
    for rec in corpus.catalog.records:
        counts[rec.diagnosis.value] += 1
    return GroupedDataset(
        abbrev=corpus.catalog.source_name,
        origin=corpus.catalog.source_name,
        rule=GroupRule(AgeCond.GT30, None, ""),
        member_ids=tuple(r.image_id for r in corpus.catalog.records),
        class_counts=counts,
        flags=ShiftFlags(biological_shift=False, technical_shift=False),
    )


def corpus_histograms(corpus: SynthCorpus) -> dict[str, np.ndarray]:
    return {
        rec.image_id: histogram(img).bins
        for rec, img in zip(corpus.catalog.records, corpus.images)
    }


def synthetic_embeddings(corpus: SynthCorpus, noise_sigma: float = 0.01, seed: int = 0) -> EmbeddingMatrix:
    """Stand-in embeddings: the five appearance statistics plus noise.

    Hue enters as degrees / 360 so every coordinate is order one or
    below; a constant coordinate keeps rows away from the zero vector.
    """
    ids = []
    rows = []
    for k, (rec, img) in enumerate(zip(corpus.catalog.records, corpus.images)):
        stats = image_stats(img)
        rng = np.random.default_rng([seed, k])
        feats = np.array(
            [
                stats.brightness,
                stats.rms_contrast,
                stats.saturation,
                stats.hue / 360.0,
                stats.blur,
                1.0,
            ]
        )
        rows.append(feats + np.concatenate([rng.normal(0.0, noise_sigma, size=5), [0.0]]))
        ids.append(rec.image_id)
    return EmbeddingMatrix(ids=tuple(ids), values=np.asarray(rows))


def synthetic_discriminator_scores(
    source: SynthCorpus,
    target: SynthCorpus,
    seed: int = 0,
    noise_sigma: float = 0.5,
) -> PredictionSet:
    """Scores of a linear stand-in discriminator for source vs target.

    Each side is split into a fit half (even indices) and a score half
    (odd indices). The fit halves define a standardized mean-difference
    direction; only the held-out score halves are projected onto it,
    with noise added, so identical distributions score near chance while
    separated ones score high. Label 1 marks target membership.
    """
    if len(source.images) < 2 or len(target.images) < 2:
        raise DataError("each side needs at least 2 images (fit + score)")
    feats_s = np.asarray(
        [[getattr(image_stats(img), s) for s in STAT_NAMES] for img in source.images]
    )
    feats_t = np.asarray(
        [[getattr(image_stats(img), s) for s in STAT_NAMES] for img in target.images]
    )
    fit = np.vstack([feats_s[0::2], feats_t[0::2]])
    center = fit.mean(axis=0)
    scale = fit.std(axis=0)
    scale[scale == 0.0] = 1.0
    w = (feats_t[0::2] - center).mean(axis=0) / scale - (feats_s[0::2] - center).mean(axis=0) / scale

    zs = (feats_s[1::2] - center) / scale
    zt = (feats_t[1::2] - center) / scale
    rng = np.random.default_rng([seed])
    raw = np.concatenate([zs @ w, zt @ w]) + rng.normal(0.0, noise_sigma, size=len(zs) + len(zt))
    scores = 1.0 / (1.0 + np.exp(-raw))
    ids = tuple(r.image_id for r in source.catalog.records[1::2]) + tuple(
        r.image_id for r in target.catalog.records[1::2]
    )
    labels = np.concatenate(
        [np.zeros(len(zs), dtype=np.int64), np.ones(len(zt), dtype=np.int64)]
    )
    return PredictionSet(ids=ids, scores=scores, labels=labels)


def monotonicity_experiment(
    metric: MetricKind,
    deltas: Sequence[float],
    n: int = 60,
    config: BootstrapConfig = BootstrapConfig(iterations=10, sample_size=50),
    base_seed: int = 7,
    size: int = DEFAULT_IMAGE_SIZE,
    diagnosis: Diagnosis = Diagnosis.NEVUS,
) -> dict[float, DivergenceSummary]:
    """Bootstrap divergence between a base corpus and brightness-shifted
    twins, one comparison per delta.

    deltas must be sorted ascending and include 0 (the self-comparison
    anchor). Returns delta -> summary; means should rise with delta for
    JSD and fall for cosine.
    """
    if list(deltas) != sorted(deltas):
        raise DataError("deltas must be sorted ascending")
    if 0 not in deltas and 0.0 not in deltas:
        raise DataError("deltas must include 0")

    base = gen_corpus(n, base_seed, ShiftSpec(), size=size, source_name="BASE")
    base_group = corpus_group(base)
    out: dict[float, DivergenceSummary] = {}
    for k, delta in enumerate(deltas):
        shifted = gen_corpus(
            n,
            base_seed,
            ShiftSpec(brightness_offset=float(delta)),
            size=size,
            source_name=f"D{k}",
        )
        merged = Catalog(
            records=base.catalog.records + shifted.catalog.records, source_name="merged"
        )
        if metric is MetricKind.JSD:
            inputs = DivergenceInputs(
                catalog=merged,
                histograms={**corpus_histograms(base), **corpus_histograms(shifted)},
            )
        else:
            emb_b = synthetic_embeddings(base)
            emb_s = synthetic_embeddings(shifted)
            inputs = DivergenceInputs(
                catalog=merged,
                embeddings=EmbeddingMatrix(
                    ids=emb_b.ids + emb_s.ids,
                    values=np.vstack([emb_b.values, emb_s.values]),
                ),
            )
        out[float(delta)] = bootstrap_divergence(
            base_group, corpus_group(shifted), diagnosis, metric, config, inputs
        )
    return out


def persist_corpus(corpus: SynthCorpus, out_dir: Path | str) -> dict[str, Path]:
    """Write PNGs plus catalog.csv; returns written paths by kind."""
    from PIL import Image

    from .metadata import serialize_catalog

    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    for rec, img in zip(corpus.catalog.records, corpus.images):
        Image.fromarray(img.pixels, mode="RGB").save(images_dir / f"{rec.image_id}.png")
    catalog_path = out_dir / "catalog.csv"
    catalog_path.write_bytes(serialize_catalog(corpus.catalog))
    return {"images": images_dir, "catalog": catalog_path}


def write_shift_table(shifts: Mapping[str, ShiftSpec]) -> str:
    """Shift parameters per corpus name, as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["corpus", "brightness_offset", "contrast_scale", "hue_rotation_deg", "noise_sigma", "seed"])
    for name in sorted(shifts):
        s = shifts[name]
        writer.writerow(
            [
                name,
                format(s.brightness_offset, ".9g"),
                format(s.contrast_scale, ".9g"),
                format(s.hue_rotation_deg, ".9g"),
                format(s.noise_sigma, ".9g"),
                s.seed,
            ]
        )
    return buf.getvalue()
