"""Rule-based grouping of a catalog into domain-shifted datasets.

Per origin, eligible melanoma/nevus records are routed down a fixed
decision tree: patients aged 30 or younger form the "young" dataset
regardless of localization; older patients split by localization bucket
into the default body dataset and the head/neck, palms/soles and
oral/genital datasets. Dataset abbreviations combine an origin prefix
(H, B, M for the known cohorts) with a rule suffix ("", A, LH, LP, LO).

Also provides small-group exclusion, deterministic stratified splitting
(optionally lesion-aware so a lesion's images never straddle the split),
a lesion leakage guard, and the group manifest JSON round trip.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import ClassTooSmall, DataError, UnknownOrigin
from .metadata import (
    BCN,
    HAM,
    MSK,
    Catalog,
    Diagnosis,
    LocalizationBucket,
    LocalizationMap,
    map_localization,
)

MIN_GROUP_TOTAL = 200

ORIGIN_PREFIXES = {HAM: "H", BCN: "B", MSK: "M"}


class AgeCond(Enum):
    LE30 = "le30"
    GT30 = "gt30"


@dataclass(frozen=True)
class GroupRule:
    """Age condition plus bucket constraint; bucket=None means any bucket."""

    age_cond: AgeCond
    bucket: LocalizationBucket | None
    suffix: str


# Candidate rules per origin, in emission order.
RULES = (
    GroupRule(AgeCond.GT30, LocalizationBucket.BODY, ""),
    GroupRule(AgeCond.LE30, None, "A"),
    GroupRule(AgeCond.GT30, LocalizationBucket.HEAD_NECK, "LH"),
    GroupRule(AgeCond.GT30, LocalizationBucket.PALMS_SOLES, "LP"),
    GroupRule(AgeCond.GT30, LocalizationBucket.ORAL_GENITAL, "LO"),
)


@dataclass(frozen=True)
class ShiftFlags:
    biological_shift: bool
    technical_shift: bool


@dataclass(frozen=True)
class GroupedDataset:
    """One dataset produced by the grouping tree.

    member_ids keeps catalog order; class_counts covers melanoma and
    nevus only (other diagnoses are never eligible).
    """

    abbrev: str
    origin: str
    rule: GroupRule
    member_ids: tuple[str, ...]
    class_counts: Mapping[str, int]
    flags: ShiftFlags

    @property
    def total(self) -> int:
        return len(self.member_ids)


def origin_prefix(origin: str) -> str:
    return ORIGIN_PREFIXES.get(origin, origin)


def _rule_matches(rule: GroupRule, age: int, bucket: LocalizationBucket) -> bool:
    if rule.age_cond is AgeCond.LE30:
        if age > 30:
            return False
    elif age <= 30:
        return False
    return rule.bucket is None or bucket is rule.bucket


def apply_grouping(
    catalog: Catalog, source_origin: str, locmap: LocalizationMap
) -> list[GroupedDataset]:
    """Partition eligible records into per-origin rule datasets.

    Eligible records are melanoma/nevus with a known age and a mapped
    (non-unknown) localization bucket. Every record matches at most one
    rule. Candidate datasets are emitted for every origin present, empty
    ones included, ordered by origin then rule.
    """
    if not catalog.records:
        return []
    origins = sorted({rec.origin for rec in catalog.records})
    if source_origin not in origins:
        raise UnknownOrigin(f"source origin {source_origin!r} not in catalog (has {origins})")

    members: dict[tuple[str, str], list[str]] = {}
    counts: dict[tuple[str, str], dict[str, int]] = {}
    for origin in origins:
        for rule in RULES:
            key = (origin, rule.suffix)
            members[key] = []
            counts[key] = {Diagnosis.MELANOMA.value: 0, Diagnosis.NEVUS.value: 0}

    for rec in catalog.records:
        if rec.diagnosis not in (Diagnosis.MELANOMA, Diagnosis.NEVUS):
            continue
        if rec.age_years is None:
            continue
        bucket = map_localization(rec.localization_raw, locmap)
        if bucket is LocalizationBucket.UNKNOWN:
            continue
        for rule in RULES:
            if _rule_matches(rule, rec.age_years, bucket):
                key = (rec.origin, rule.suffix)
                members[key].append(rec.image_id)
                counts[key][rec.diagnosis.value] += 1
                break

    groups = []
    for origin in origins:
        for rule in RULES:
            key = (origin, rule.suffix)
            is_default = rule.suffix == ""
            groups.append(
                GroupedDataset(
                    abbrev=origin_prefix(origin) + rule.suffix,
                    origin=origin,
                    rule=rule,
                    member_ids=tuple(members[key]),
                    class_counts=dict(counts[key]),
                    flags=ShiftFlags(
                        biological_shift=not is_default,
                        technical_shift=origin != source_origin,
                    ),
                )
            )
    return groups


def exclude_small(
    groups: Sequence[GroupedDataset], min_total: int = MIN_GROUP_TOTAL
) -> tuple[list[GroupedDataset], list[GroupedDataset]]:
    """Split into (kept, removed); a group is removed when total <= min_total."""
    kept = [g for g in groups if g.total > min_total]
    removed = [g for g in groups if g.total <= min_total]
    return kept, removed


def members_by_class(group: GroupedDataset, catalog: Catalog) -> dict[Diagnosis, tuple[str, ...]]:
    """Group members partitioned by diagnosis, in catalog order."""
    diag = catalog.diagnosis_of()
    out: dict[Diagnosis, list[str]] = {Diagnosis.MELANOMA: [], Diagnosis.NEVUS: []}
    for image_id in group.member_ids:
        d = diag[image_id]
        if d in out:
            out[d].append(image_id)
    return {d: tuple(ids) for d, ids in out.items()}


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    lesion_aware: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction {self.train_fraction} outside (0, 1)")


def _shuffle_key(seed: int, token: str) -> str:
    return hashlib.sha256(f"{seed}:{token}".encode("utf-8")).hexdigest()


def _recount(ids: Sequence[str], diag: Mapping[str, Diagnosis]) -> dict[str, int]:
    counts = {Diagnosis.MELANOMA.value: 0, Diagnosis.NEVUS.value: 0}
    for image_id in ids:
        d = diag[image_id]
        if d.value in counts:
            counts[d.value] += 1
    return counts


def stratified_split(
    group: GroupedDataset, spec: SplitSpec, catalog: Catalog
) -> tuple[GroupedDataset, GroupedDataset]:
    """Deterministic per-class split into train and holdout datasets.

    Per class, floor(train_fraction * n) members go to train and the rest
    to holdout, ordered by a sha256 shuffle keyed on (seed, image_id).
    With lesion_aware on (the default) and lesion ids present, whole
    lesions are placed on one side: lesion clusters are assigned in
    shuffle order to train while they fit under the per-class targets,
    which can leave train slightly under target. Both outputs keep
    catalog member order.
    """
    diag = catalog.diagnosis_of()
    by_class = members_by_class(group, catalog)
    present = {d: ids for d, ids in by_class.items() if ids}
    for d, ids in present.items():
        if len(ids) < 2:
            raise ClassTooSmall(f"class {d.value} has {len(ids)} member(s); need >= 2")

    targets = {d: int(spec.train_fraction * len(ids)) for d, ids in present.items()}
    lesion_of = catalog.lesion_of()
    use_lesions = spec.lesion_aware and any(i in lesion_of for i in group.member_ids)

    train_ids: set[str] = set()
    if not use_lesions:
        for d, ids in present.items():
            ranked = sorted(ids, key=lambda i: (_shuffle_key(spec.seed, i), i))
            train_ids.update(ranked[: targets[d]])
    else:
        clusters: dict[str, list[str]] = {}
        for image_id in group.member_ids:
            token = lesion_of.get(image_id, f"img:{image_id}")
            clusters.setdefault(token, []).append(image_id)
        filled = {d: 0 for d in present}
        for token in sorted(clusters, key=lambda t: (_shuffle_key(spec.seed, t), t)):
            ids = clusters[token]
            need = {d: 0 for d in present}
            for image_id in ids:
                need[diag[image_id]] += 1
            if all(filled[d] + need[d] <= targets[d] for d in present):
                train_ids.update(ids)
                for d in present:
                    filled[d] += need[d]

    train_members = tuple(i for i in group.member_ids if i in train_ids)
    hold_members = tuple(i for i in group.member_ids if i not in train_ids)
    train = replace(
        group,
        abbrev=group.abbrev + "-train",
        member_ids=train_members,
        class_counts=_recount(train_members, diag),
    )
    hold = replace(
        group,
        abbrev=group.abbrev + "-holdout",
        member_ids=hold_members,
        class_counts=_recount(hold_members, diag),
    )
    return train, hold


def leakage_guard(
    train: GroupedDataset, test: GroupedDataset, catalog: Catalog
) -> list[str]:
    """Lesion ids with images on both sides, sorted. Empty means clean."""
    lesion_of = catalog.lesion_of()
    train_lesions = {lesion_of[i] for i in train.member_ids if i in lesion_of}
    test_lesions = {lesion_of[i] for i in test.member_ids if i in lesion_of}
    return sorted(train_lesions & test_lesions)


def _group_to_dict(group: GroupedDataset) -> dict:
    return {
        "abbrev": group.abbrev,
        "origin": group.origin,
        "rule": {
            "age_cond": group.rule.age_cond.value,
            "bucket": group.rule.bucket.value if group.rule.bucket else None,
            "suffix": group.rule.suffix,
        },
        "flags": {
            "biological_shift": group.flags.biological_shift,
            "technical_shift": group.flags.technical_shift,
        },
        "class_counts": dict(group.class_counts),
        "member_ids": list(group.member_ids),
    }


def _group_from_dict(data: dict) -> GroupedDataset:
    rule = GroupRule(
        age_cond=AgeCond(data["rule"]["age_cond"]),
        bucket=LocalizationBucket(data["rule"]["bucket"]) if data["rule"]["bucket"] else None,
        suffix=data["rule"]["suffix"],
    )
    return GroupedDataset(
        abbrev=data["abbrev"],
        origin=data["origin"],
        rule=rule,
        member_ids=tuple(data["member_ids"]),
        class_counts=dict(data["class_counts"]),
        flags=ShiftFlags(
            biological_shift=data["flags"]["biological_shift"],
            technical_shift=data["flags"]["technical_shift"],
        ),
    )


def write_manifest(groups: Iterable[GroupedDataset]) -> str:
    """Group manifest JSON: the downstream contract for dataset membership."""
    payload = {"groups": [_group_to_dict(g) for g in groups]}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def read_manifest(text: str) -> list[GroupedDataset]:
    try:
        payload = json.loads(text)
        return [_group_from_dict(item) for item in payload["groups"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad group manifest: {exc}") from None
