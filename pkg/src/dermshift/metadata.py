"""Catalog metadata: parsing, normalization, and lesion-duplicate detection.

A catalog is an ordered, immutable collection of per-image metadata rows.
Parsing is strict: a single malformed row rejects the whole file so that
experiment provenance stays exact. Optional fields stay absent (None)
rather than being defaulted.

Catalog CSV contract: columns
``image_id,lesion_id,diagnosis,age_years,localization,origin,sex``
with the empty string meaning "absent" for optional fields.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DuplicateImageId, MalformedCsv, MissingRequiredColumn

logger = logging.getLogger(__name__)

CATALOG_COLUMNS = ("image_id", "lesion_id", "diagnosis", "age_years", "localization", "origin", "sex")
REQUIRED_COLUMNS = ("image_id", "diagnosis")

# Canonical origin labels for the three archive cohorts. Any other origin
# string is carried through as-is (stripped, uppercased).
HAM = "HAM"
BCN = "BCN"
MSK = "MSK"

AGE_MIN, AGE_MAX = 0, 120


class Diagnosis(Enum):
    MELANOMA = "melanoma"
    NEVUS = "nevus"
    OTHER = "other"

    @classmethod
    def parse(cls, raw: str) -> "Diagnosis":
        lowered = raw.strip().lower()
        if lowered == "melanoma":
            return cls.MELANOMA
        if lowered == "nevus":
            return cls.NEVUS
        return cls.OTHER


class Sex(Enum):
    MALE = "male"
    FEMALE = "female"


class LocalizationBucket(Enum):
    BODY = "body"
    HEAD_NECK = "head_neck"
    PALMS_SOLES = "palms_soles"
    ORAL_GENITAL = "oral_genital"
    UNKNOWN = "unknown"


def normalize_origin(raw: str) -> str:
    return raw.strip().upper()


@dataclass(frozen=True)
class MetadataRecord:
    """One catalog row. Optional fields are None when absent."""

    image_id: str
    diagnosis: Diagnosis
    origin: str
    localization_raw: str = ""
    lesion_id: str | None = None
    age_years: int | None = None
    sex: Sex | None = None


@dataclass(frozen=True)
class Catalog:
    """Ordered, immutable set of records with unique image ids."""

    records: tuple[MetadataRecord, ...]
    source_name: str

    def __post_init__(self):
        seen: set[str] = set()
        dupes: set[str] = set()
        for rec in self.records:
            if rec.image_id in seen:
                dupes.add(rec.image_id)
            seen.add(rec.image_id)
        if dupes:
            raise DuplicateImageId(dupes)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, MetadataRecord]:
        return {rec.image_id: rec for rec in self.records}

    def diagnosis_of(self) -> dict[str, Diagnosis]:
        return {rec.image_id: rec.diagnosis for rec in self.records}

    def lesion_of(self) -> dict[str, str]:
        """image_id -> lesion_id for records that carry one."""
        return {rec.image_id: rec.lesion_id for rec in self.records if rec.lesion_id is not None}


@dataclass
class LocalizationMap:
    """Total lookup from raw localization strings to buckets.

    Keys are matched case-insensitively after whitespace trimming; misses
    resolve to UNKNOWN and are warned about once per distinct raw value.
    """

    entries: dict[str, LocalizationBucket]
    _warned: set[str] = field(default_factory=set, repr=False, compare=False)

    def __post_init__(self):
        self.entries = {key.strip().lower(): bucket for key, bucket in self.entries.items()}

    def lookup(self, raw: str) -> LocalizationBucket:
        key = raw.strip().lower()
        bucket = self.entries.get(key)
        if bucket is None:
            if key not in self._warned:
                self._warned.add(key)
                logger.warning("unmapped localization %r -> unknown", raw)
            return LocalizationBucket.UNKNOWN
        return bucket


def map_localization(raw: str, locmap: LocalizationMap) -> LocalizationBucket:
    """Deterministic, total mapping of a raw localization to its bucket."""
    return locmap.lookup(raw)


def load_localization_map(data: bytes | str) -> LocalizationMap:
    """Read a ``raw,bucket`` CSV into a LocalizationMap."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise MalformedCsv("empty localization map")
    header = [cell.strip().lower() for cell in rows[0]]
    if header != ["raw", "bucket"]:
        raise MissingRequiredColumn({"raw", "bucket"} - set(header))
    entries: dict[str, LocalizationBucket] = {}
    for index, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise MalformedCsv("expected 2 cells", row_index=index)
        raw, bucket_name = row
        try:
            bucket = LocalizationBucket(bucket_name.strip().lower())
        except ValueError:
            raise MalformedCsv(f"unknown bucket {bucket_name!r}", row_index=index) from None
        entries[raw] = bucket
    return LocalizationMap(entries)


def default_localization_map() -> LocalizationMap:
    """Built-in map covering the public archive's localization vocabulary.

    Ships as an editable CSV resource so vocabulary drift is a config
    change, not a code change.
    """
    data = resources.files("dermshift.resources").joinpath("localization_map.csv").read_bytes()
    return load_localization_map(data)


def _parse_record(row: Mapping[str, str], index: int) -> MetadataRecord:
    image_id = row.get("image_id", "").strip()
    if not image_id:
        raise MalformedCsv("empty image_id", row_index=index)

    age: int | None = None
    age_raw = row.get("age_years", "").strip()
    if age_raw:
        try:
            age = int(age_raw)
        except ValueError:
            raise MalformedCsv(f"age_years {age_raw!r} is not an integer", row_index=index) from None
        if not AGE_MIN <= age <= AGE_MAX:
            raise MalformedCsv(f"age_years {age} outside [{AGE_MIN}, {AGE_MAX}]", row_index=index)

    sex: Sex | None = None
    sex_raw = row.get("sex", "").strip().lower()
    if sex_raw in ("male", "m"):
        sex = Sex.MALE
    elif sex_raw in ("female", "f"):
        sex = Sex.FEMALE

    lesion = row.get("lesion_id", "").strip() or None
    return MetadataRecord(
        image_id=image_id,
        diagnosis=Diagnosis.parse(row.get("diagnosis", "")),
        origin=normalize_origin(row.get("origin", "")),
        localization_raw=row.get("localization", "").strip(),
        lesion_id=lesion,
        age_years=age,
        sex=sex,
    )


def parse_catalog(data: bytes | str, source_name: str) -> Catalog:
    """Parse a catalog CSV. Any bad row rejects the whole file.

    Row indices in errors are 1-based file lines (the header is line 1).
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedCsv(f"not UTF-8: {exc}") from None
    else:
        text = data
    reader = csv.reader(io.StringIO(text))
    try:
        rows = list(reader)
    except csv.Error as exc:
        raise MalformedCsv(f"unreadable CSV: {exc}") from None
    if not rows:
        raise MalformedCsv("empty file")

    header = [cell.strip() for cell in rows[0]]
    missing = set(REQUIRED_COLUMNS) - set(header)
    if missing:
        raise MissingRequiredColumn(missing)

    records = []
    for index, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedCsv(f"expected {len(header)} cells, got {len(row)}", row_index=index)
        records.append(_parse_record(dict(zip(header, row)), index))
    return Catalog(records=tuple(records), source_name=source_name)


def serialize_catalog(catalog: Catalog) -> bytes:
    """Write the canonical CSV form; parse(serialize(c)) == c."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CATALOG_COLUMNS)
    for rec in catalog.records:
        writer.writerow(
            [
                rec.image_id,
                rec.lesion_id or "",
                rec.diagnosis.value,
                "" if rec.age_years is None else str(rec.age_years),
                rec.localization_raw,
                rec.origin,
                "" if rec.sex is None else rec.sex.value,
            ]
        )
    return buf.getvalue().encode("utf-8")


def read_catalog_file(path: Path | str, source_name: str | None = None) -> Catalog:
    path = Path(path)
    return parse_catalog(path.read_bytes(), source_name or path.stem)


@dataclass(frozen=True)
class DuplicateGroup:
    lesion_id: str
    image_ids: tuple[str, ...]


def detect_duplicates(catalog: Catalog) -> list[DuplicateGroup]:
    """Lesion-level duplicate groups (size >= 2), sorted by lesion id.

    Records without a lesion id are never grouped.
    """
    by_lesion: dict[str, list[str]] = {}
    for rec in catalog.records:
        if rec.lesion_id is not None:
            by_lesion.setdefault(rec.lesion_id, []).append(rec.image_id)
    return [
        DuplicateGroup(lesion_id=lesion, image_ids=tuple(ids))
        for lesion, ids in sorted(by_lesion.items())
        if len(ids) >= 2
    ]


def merge_catalogs(catalogs: Iterable[Catalog], source_name: str) -> Catalog:
    """Concatenate catalogs; image ids must stay globally unique."""
    records: list[MetadataRecord] = []
    for catalog in catalogs:
        records.extend(catalog.records)
    return Catalog(records=tuple(records), source_name=source_name)
