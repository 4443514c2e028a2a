"""Archive metadata fetch client.

Walks a cursor-paginated JSON endpoint (``{"results": [...], "next":
url-or-null}``), caching every page on disk as it arrives. A completed
walk drops a marker file, after which rebuilding the catalog never
touches the network; an interrupted walk resumes at the first uncached
page. Requests retry with capped exponential backoff before raising
NetworkError.

Pagination follows server-supplied cursors, so pages are requested
sequentially; deterministic output order comes from sorting the final
records by image_id.

Archive records map onto catalog fields through dotted paths
(FieldMap), defaulting to the public archive's metadata layout. A page
whose records lack a required mapped field raises SchemaDrift rather
than silently dropping rows.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping
from urllib.parse import urlencode

from .errors import NetworkError, SchemaDrift
from .metadata import (
    Catalog,
    Diagnosis,
    MetadataRecord,
    normalize_origin,
    serialize_catalog,
)

logger = logging.getLogger(__name__)

COMPLETE_MARKER = "complete.json"

# attribution substring -> canonical origin, checked case-insensitively
ATTRIBUTION_ORIGINS = {
    "vidir": "HAM",
    "medical university of vienna": "HAM",
    "hospital clinic de barcelona": "BCN",
    "hospital clínic de barcelona": "BCN",
    "barcelona": "BCN",
    "memorial sloan": "MSK",
    "msk": "MSK",
}


@dataclass(frozen=True)
class FieldMap:
    """Dotted-path locations of catalog fields inside an archive record."""

    image_id: str = "isic_id"
    diagnosis: str = "metadata.clinical.diagnosis"
    age_years: str = "metadata.clinical.age_approx"
    localization: str = "metadata.clinical.anatom_site_general"
    sex: str = "metadata.clinical.sex"
    lesion_id: str = "metadata.clinical.lesion_id"
    attribution: str = "attribution"


@dataclass(frozen=True)
class FetchConfig:
    endpoint: str
    cache_dir: Path
    params: Mapping[str, str] = field(default_factory=dict)
    field_map: FieldMap = FieldMap()
    origin_default: str = ""
    page_size: int = 100
    max_retries: int = 4
    backoff_base_s: float = 0.5
    backoff_cap_s: float = 8.0
    timeout_s: float = 30.0


def _dig(record: Mapping[str, Any], dotted: str) -> Any:
    node: Any = record
    for part in dotted.split("."):
        if not isinstance(node, Mapping) or part not in node:
            return None
        node = node[part]
    return node


def _resolve_origin(attribution: Any, default: str) -> str:
    if isinstance(attribution, str) and attribution.strip():
        lowered = attribution.lower()
        for needle, origin in ATTRIBUTION_ORIGINS.items():
            if needle in lowered:
                return origin
        return normalize_origin(attribution) if not default else default
    return default


def record_from_api(raw: Mapping[str, Any], fmap: FieldMap, origin_default: str) -> MetadataRecord:
    """Map one archive record to a MetadataRecord.

    image_id and diagnosis paths must resolve; their absence means the
    server schema no longer matches the field map.
    """
    image_id = _dig(raw, fmap.image_id)
    if not isinstance(image_id, str) or not image_id:
        raise SchemaDrift(f"field {fmap.image_id!r} missing from record")
    diagnosis_raw = _dig(raw, fmap.diagnosis)
    if diagnosis_raw is None:
        raise SchemaDrift(f"field {fmap.diagnosis!r} missing from record {image_id}")

    age_raw = _dig(raw, fmap.age_years)
    age = None
    if age_raw is not None:
        try:
            age = int(age_raw)
        except (TypeError, ValueError):
            age = None

    sex_raw = _dig(raw, fmap.sex)
    from .metadata import Sex

    sex = None
    if isinstance(sex_raw, str):
        lowered = sex_raw.strip().lower()
        if lowered in ("male", "m"):
            sex = Sex.MALE
        elif lowered in ("female", "f"):
            sex = Sex.FEMALE

    lesion = _dig(raw, fmap.lesion_id)
    localization = _dig(raw, fmap.localization)
    return MetadataRecord(
        image_id=image_id,
        diagnosis=Diagnosis.parse(str(diagnosis_raw)),
        origin=_resolve_origin(_dig(raw, fmap.attribution), origin_default),
        localization_raw=str(localization) if localization is not None else "",
        lesion_id=str(lesion) if lesion else None,
        age_years=age if age is not None and 0 <= age <= 120 else None,
        sex=sex,
    )


def _get_with_retries(
    url: str, config: FetchConfig, sleep: Callable[[float], None]
) -> dict:
    import requests

    last_error: Exception | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            delay = min(config.backoff_base_s * 2 ** (attempt - 1), config.backoff_cap_s)
            sleep(delay)
        try:
            response = requests.get(url, timeout=config.timeout_s)
            if response.status_code == 200:
                return response.json()
            last_error = NetworkError(f"HTTP {response.status_code} from {url}")
            logger.warning("attempt %d: %s", attempt + 1, last_error)
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
            logger.warning("attempt %d: %s", attempt + 1, exc)
    raise NetworkError(f"gave up on {url} after {config.max_retries + 1} attempts: {last_error}")


def _page_path(cache_dir: Path, index: int) -> Path:
    return cache_dir / f"page_{index:05d}.json"


def _first_url(config: FetchConfig) -> str:
    params = dict(config.params)
    params.setdefault("limit", str(config.page_size))
    query = urlencode(sorted(params.items()))
    sep = "&" if "?" in config.endpoint else "?"
    return f"{config.endpoint}{sep}{query}" if query else config.endpoint


def fetch_pages(config: FetchConfig, sleep: Callable[[float], None] = time.sleep) -> list[dict]:
    """Return all result pages, fetching only what the cache lacks.

    Cached pages are replayed in order; the walk resumes from the last
    cached page's next-cursor. With the completion marker present the
    call is fully offline.
    """
    cache_dir = config.cache_dir
    cache_dir.mkdir(parents=True, exist_ok=True)
    marker = cache_dir / COMPLETE_MARKER

    pages: list[dict] = []
    index = 0
    next_url: str | None = _first_url(config)
    while True:
        path = _page_path(cache_dir, index)
        if path.exists():
            page = json.loads(path.read_text("utf-8"))
        elif marker.exists():
            break
        elif next_url is None:
            break
        else:
            page = _get_with_retries(next_url, config, sleep)
            if "results" not in page:
                raise SchemaDrift(f"page {index} has no 'results' key")
            path.write_text(json.dumps(page, sort_keys=True), "utf-8")
        pages.append(page)
        next_url = page.get("next")
        index += 1
        if next_url is None:
            break

    if not marker.exists():
        marker.write_text(json.dumps({"pages": len(pages)}), "utf-8")
    return pages


def fetch_catalog(
    config: FetchConfig,
    source_name: str = "isic",
    out_csv: Path | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Catalog:
    """Fetch (or replay from cache) a full catalog, sorted by image_id."""
    pages = fetch_pages(config, sleep=sleep)
    records = []
    for page in pages:
        for raw in page.get("results", []):
            records.append(record_from_api(raw, config.field_map, config.origin_default))
    records.sort(key=lambda r: r.image_id)
    catalog = Catalog(records=tuple(records), source_name=source_name)
    if out_csv is not None:
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        out_csv.write_bytes(serialize_catalog(catalog))
    return catalog
