"""Per-image appearance statistics and box-plot summaries.

Statistics are computed in HSV space (hexcone model): brightness is the
mean of V, contrast the population standard deviation of V, saturation
the mean of S, hue the circular mean of H in degrees over pixels with
S > 0, and blur the population variance of a 3x3 Laplacian of V with
replicated edges. V and S live in [0, 1], H in [0, 360) with H = 0 for
achromatic pixels.

Box summaries use Tukey hinges (median-inclusive halves for odd n) and
standard 1.5 IQR fences.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateImage, EmptyClass, EmptyInput
from .grouping import GroupedDataset, members_by_class
from .metadata import Catalog, Diagnosis

STAT_NAMES = ("brightness", "rms_contrast", "saturation", "hue", "blur")

DEFAULT_SAMPLE_N = 450


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB image, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = self.pixels
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise DegenerateImage(f"expected (h, w, 3) uint8, got {arr.shape} {arr.dtype}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DegenerateImage("image has a zero dimension")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


def rgb_to_hsv(image: RgbImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hexcone RGB -> (H degrees, S, V) as float64 planes.

    V = max/255, S = (max - min)/max (0 when max = 0), H piecewise from
    the dominant channel; H = 0 whenever S = 0.
    """
    rgb = image.pixels.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=2)
    cmin = rgb.min(axis=2)
    delta = v - cmin

    s = np.zeros_like(v)
    nonzero = v > 0
    s[nonzero] = delta[nonzero] / v[nonzero]

    h = np.zeros_like(v)
    chroma = delta > 0
    safe = np.where(chroma, delta, 1.0)
    rm = chroma & (v == r)
    gm = chroma & (v == g) & ~rm
    bm = chroma & ~rm & ~gm
    h[rm] = 60.0 * (((g - b)[rm] / safe[rm]) % 6.0)
    h[gm] = 60.0 * ((b - r)[gm] / safe[gm] + 2.0)
    h[bm] = 60.0 * ((r - g)[bm] / safe[bm] + 4.0)
    h = h % 360.0
    return h, s, v


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inverse hexcone transform; returns float64 RGB in [0, 1]."""
    h = np.asarray(h, dtype=np.float64) % 360.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c = v * s
    hp = h / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    sector = np.floor(hp).astype(int) % 6
    zeros = np.zeros_like(c)
    r1 = np.choose(sector, [c, x, zeros, zeros, x, c])
    g1 = np.choose(sector, [x, c, c, x, zeros, zeros])
    b1 = np.choose(sector, [zeros, zeros, x, c, c, x])
    m = v - c
    return np.stack([r1 + m, g1 + m, b1 + m], axis=-1)


@dataclass(frozen=True)
class ImageStatsRecord:
    brightness: float
    rms_contrast: float
    saturation: float
    hue: float
    blur: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in STAT_NAMES}


def image_stats(image: RgbImage) -> ImageStatsRecord:
    h, s, v = rgb_to_hsv(image)
    chromatic = s > 0
    if chromatic.any():
        rad = np.deg2rad(h[chromatic])
        hue = math.degrees(math.atan2(np.sin(rad).mean(), np.cos(rad).mean())) % 360.0
    else:
        hue = 0.0
    return ImageStatsRecord(
        brightness=float(v.mean()),
        rms_contrast=float(v.std()),
        saturation=float(s.mean()),
        hue=float(hue),
        blur=float(kernels.laplacian_variance(v)),
    )


def _median(values: Sequence[float]) -> float:
    n = len(values)
    mid = n // 2
    if n % 2:
        return float(values[mid])
    return (values[mid - 1] + values[mid]) / 2.0


def _hinges(values: Sequence[float]) -> tuple[float, float, float]:
    """Tukey hinges: for odd n the median joins both halves."""
    n = len(values)
    med = _median(values)
    if n == 1:
        return med, med, med
    half = n // 2
    if n % 2:
        lower, upper = values[: half + 1], values[half:]
    else:
        lower, upper = values[:half], values[half:]
    return _median(lower), med, _median(upper)


@dataclass(frozen=True)
class BoxSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    lower_fence: float
    upper_fence: float
    n: int
    outliers_excluded: bool


def summarize_values(values: Sequence[float], exclude_outliers: bool = False) -> BoxSummary:
    if len(values) == 0:
        raise EmptyInput("no values to summarize")
    ordered = sorted(float(v) for v in values)
    q1, med, q3 = _hinges(ordered)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    if exclude_outliers:
        in_fence = [v for v in ordered if lo_fence <= v <= hi_fence]
        vmin, vmax = in_fence[0], in_fence[-1]
    else:
        vmin, vmax = ordered[0], ordered[-1]
    return BoxSummary(
        minimum=vmin,
        q1=q1,
        median=med,
        q3=q3,
        maximum=vmax,
        lower_fence=lo_fence,
        upper_fence=hi_fence,
        n=len(ordered),
        outliers_excluded=exclude_outliers,
    )


def summarize(
    records: Sequence[ImageStatsRecord], stat: str, exclude_outliers: bool = False
) -> BoxSummary:
    """Box summary of one statistic across records."""
    if stat not in STAT_NAMES:
        raise EmptyInput(f"unknown statistic {stat!r}")
    return summarize_values([getattr(r, stat) for r in records], exclude_outliers)


def sample_per_class(
    group: GroupedDataset,
    catalog: Catalog,
    diagnosis: Diagnosis,
    n: int = DEFAULT_SAMPLE_N,
    seed: int = 0,
) -> tuple[str, ...]:
    """Up to n image ids of one class, drawn without replacement.

    The class pool is ordered by image_id, permuted by a seeded RNG, then
    the first min(n, pool) ids are returned sorted. Deterministic in
    (group, catalog, diagnosis, n, seed).
    """
    pool = sorted(members_by_class(group, catalog)[diagnosis])
    if not pool:
        raise EmptyClass(f"{group.abbrev} has no {diagnosis.value} members")
    rng = np.random.default_rng([seed])
    order = rng.permutation(len(pool))
    take = min(n, len(pool))
    return tuple(sorted(pool[i] for i in order[:take]))


STATS_CSV_COLUMNS = ("image_id", "class", "dataset", *STAT_NAMES)


def write_stats_csv(rows: Sequence[tuple[str, str, str, ImageStatsRecord]]) -> str:
    """Stats CSV: image_id, class, dataset, then the five statistics."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_CSV_COLUMNS)
    for image_id, cls, dataset, rec in rows:
        writer.writerow(
            [image_id, cls, dataset] + [format(getattr(rec, s), ".9g") for s in STAT_NAMES]
        )
    return buf.getvalue()


def read_stats_csv(text: str) -> list[tuple[str, str, str, ImageStatsRecord]]:
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for row in reader:
        rec = ImageStatsRecord(**{s: float(row[s]) for s in STAT_NAMES})
        rows.append((row["image_id"], row["class"], row["dataset"], rec))
    return rows


def load_image(path: Path | str, resize_to: int | None = None) -> RgbImage:
    """Read an image file as RGB, optionally nearest-neighbor resized to
    a square working resolution so histograms are comparable across
    source resolutions."""
    from PIL import Image

    with Image.open(path) as img:
        img = img.convert("RGB")
        if resize_to is not None and img.size != (resize_to, resize_to):
            img = img.resize((resize_to, resize_to), Image.NEAREST)
        return RgbImage(np.asarray(img, dtype=np.uint8))
