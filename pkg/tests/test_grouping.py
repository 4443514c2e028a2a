"""Grouping tree, exclusion threshold, stratified split, leakage guard."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dermshift.errors import ClassTooSmall, DataError, UnknownOrigin
from dermshift.grouping import (
    SplitSpec,
    apply_grouping,
    exclude_small,
    leakage_guard,
    members_by_class,
    read_manifest,
    stratified_split,
    write_manifest,
)
from dermshift.metadata import (
    Catalog,
    Diagnosis,
    MetadataRecord,
    default_localization_map,
    parse_catalog,
)

from .conftest import catalog_csv

LOCMAP = default_localization_map()


def record(image_id, dx="nevus", age=45, loc="torso", origin="HAM", lesion=None):
    return MetadataRecord(
        image_id=image_id,
        diagnosis=Diagnosis.parse(dx),
        origin=origin,
        localization_raw=loc,
        lesion_id=lesion,
        age_years=age,
    )


def by_abbrev(groups):
    return {g.abbrev: g for g in groups}


# ------------------------------------------------------------------- routing


def test_tree_routing_one_origin():
    catalog = Catalog(
        records=(
            record("body", age=45, loc="torso"),
            record("young", age=30, loc="head/neck"),
            record("hn", age=31, loc="head/neck"),
            record("ps", age=80, loc="palms/soles"),
            record("og", age=50, loc="oral/genital"),
        ),
        source_name="t",
    )
    groups = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))
    assert groups["H"].member_ids == ("body",)
    assert groups["HA"].member_ids == ("young",)
    assert groups["HLH"].member_ids == ("hn",)
    assert groups["HLP"].member_ids == ("ps",)
    assert groups["HLO"].member_ids == ("og",)


def test_age_boundary_at_30():
    catalog = Catalog(
        records=(record("at30", age=30), record("at31", age=31)),
        source_name="t",
    )
    groups = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))
    assert groups["HA"].member_ids == ("at30",)
    assert groups["H"].member_ids == ("at31",)


def test_young_absorbs_all_localizations():
    catalog = Catalog(
        records=(
            record("y1", age=20, loc="torso"),
            record("y2", age=20, loc="head/neck"),
            record("y3", age=20, loc="palms/soles"),
            record("y4", age=20, loc="oral/genital"),
        ),
        source_name="t",
    )
    groups = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))
    assert set(groups["HA"].member_ids) == {"y1", "y2", "y3", "y4"}


def test_ineligible_records_excluded(small_catalog):
    groups = apply_grouping(small_catalog, "HAM", LOCMAP)
    all_members = [i for g in groups for i in g.member_ids]
    # img005: other diagnosis; img006: no age; img008: unmapped localization
    assert "img005" not in all_members
    assert "img006" not in all_members
    assert "img008" not in all_members


def test_every_eligible_record_in_exactly_one_group(small_catalog):
    groups = apply_grouping(small_catalog, "HAM", LOCMAP)
    all_members = [i for g in groups for i in g.member_ids]
    assert len(all_members) == len(set(all_members))
    assert set(all_members) == {"img001", "img002", "img003", "img004", "img007", "img009", "img010"}


def test_abbreviations_per_origin(small_catalog):
    groups = apply_grouping(small_catalog, "HAM", LOCMAP)
    abbrevs = {g.abbrev for g in groups}
    assert {"H", "HA", "HLH", "HLP", "HLO", "B", "BA", "M", "MA"} <= abbrevs


def test_unknown_origin_prefix_is_origin_string():
    catalog = Catalog(records=(record("x", origin="XYZCLINIC"),), source_name="t")
    groups = apply_grouping(catalog, "XYZCLINIC", LOCMAP)
    assert by_abbrev(groups)["XYZCLINIC"].member_ids == ("x",)


def test_flag_matrix_known_cohorts():
    records = []
    spec = [
        ("HAM", 45, "torso"), ("HAM", 25, "torso"), ("HAM", 45, "head/neck"),
        ("HAM", 45, "palms/soles"), ("BCN", 45, "torso"), ("BCN", 45, "palms/soles"),
        ("MSK", 45, "torso"), ("MSK", 45, "head/neck"),
    ]
    for k, (origin, age, loc) in enumerate(spec):
        records.append(record(f"r{k}", age=age, loc=loc, origin=origin))
    groups = by_abbrev(apply_grouping(Catalog(records=tuple(records), source_name="t"), "HAM", LOCMAP))

    expected = {
        "H": (False, False),
        "HA": (True, False),
        "HLH": (True, False),
        "HLP": (True, False),
        "B": (False, True),
        "BLP": (True, True),
        "M": (False, True),
        "MLH": (True, True),
    }
    for abbrev, (bio, tech) in expected.items():
        assert groups[abbrev].flags.biological_shift is bio, abbrev
        assert groups[abbrev].flags.technical_shift is tech, abbrev


def test_class_counts(small_catalog):
    groups = by_abbrev(apply_grouping(small_catalog, "HAM", LOCMAP))
    assert groups["H"].class_counts == {"melanoma": 2, "nevus": 0}
    assert groups["HLH"].class_counts == {"melanoma": 0, "nevus": 1}


def test_empty_catalog_no_groups():
    catalog = Catalog(records=(), source_name="t")
    assert apply_grouping(catalog, "HAM", LOCMAP) == []


def test_unknown_source_origin_raises(small_catalog):
    with pytest.raises(UnknownOrigin):
        apply_grouping(small_catalog, "NOPE", LOCMAP)


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_partition_property_random_catalogs(seed):
    import numpy as np

    rng = np.random.default_rng(seed)
    records = []
    origins = ["HAM", "BCN", "MSK"]
    diagnoses = ["melanoma", "nevus", "other thing"]
    locs = ["torso", "head/neck", "palms/soles", "oral/genital", "weird", ""]
    for k in range(200):
        records.append(
            record(
                f"r{k}",
                dx=diagnoses[rng.integers(0, 3)],
                age=None if rng.random() < 0.1 else int(rng.integers(0, 121)),
                loc=locs[rng.integers(0, len(locs))],
                origin=origins[rng.integers(0, 3)],
            )
        )
    catalog = Catalog(records=tuple(records), source_name="t")
    groups = apply_grouping(catalog, "HAM", LOCMAP)

    eligible = {
        r.image_id
        for r in records
        if r.diagnosis in (Diagnosis.MELANOMA, Diagnosis.NEVUS)
        and r.age_years is not None
        and r.localization_raw in ("torso", "head/neck", "palms/soles", "oral/genital")
    }
    placed = [i for g in groups for i in g.member_ids]
    assert len(placed) == len(set(placed))
    assert set(placed) == eligible


# ------------------------------------------------------------- exclude_small


def _sized_group(n, abbrev="G"):
    catalog = Catalog(
        records=tuple(record(f"{abbrev}{k}") for k in range(n)), source_name="t"
    )
    groups = apply_grouping(catalog, "HAM", LOCMAP)
    group = by_abbrev(groups)["H"]
    return group


def test_exclusion_boundary_200_removed_201_kept():
    kept, removed = exclude_small([_sized_group(200)], min_total=200)
    assert kept == [] and len(removed) == 1
    kept, removed = exclude_small([_sized_group(201)], min_total=200)
    assert len(kept) == 1 and removed == []


def test_exclude_small_partitions():
    groups = [_sized_group(5), _sized_group(300)]
    kept, removed = exclude_small(groups)
    assert set(g.total for g in kept) == {300}
    assert set(g.total for g in removed) == {5}


# ---------------------------------------------------------- stratified_split


def _clone_catalog(n_mel, n_nev, lesions=None):
    records = []
    for k in range(n_mel):
        records.append(record(f"m{k:05d}", dx="melanoma",
                              lesion=None if lesions is None else lesions.get(f"m{k:05d}")))
    for k in range(n_nev):
        records.append(record(f"n{k:05d}", dx="nevus",
                              lesion=None if lesions is None else lesions.get(f"n{k:05d}")))
    return Catalog(records=tuple(records), source_name="t")


def test_split_reference_cohort_sizes():
    catalog = _clone_catalog(465, 4234)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    train, hold = stratified_split(group, SplitSpec(seed=3), catalog)
    assert train.class_counts == {"melanoma": 372, "nevus": 3387}
    assert hold.class_counts == {"melanoma": 93, "nevus": 847}


def test_split_disjoint_exhaustive():
    catalog = _clone_catalog(23, 77)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    train, hold = stratified_split(group, SplitSpec(seed=0), catalog)
    assert set(train.member_ids) | set(hold.member_ids) == set(group.member_ids)
    assert set(train.member_ids) & set(hold.member_ids) == set()
    assert train.abbrev == "H-train" and hold.abbrev == "H-holdout"


def test_split_per_class_floor():
    catalog = _clone_catalog(7, 9)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    train, _ = stratified_split(group, SplitSpec(train_fraction=0.8, seed=1), catalog)
    assert train.class_counts == {"melanoma": math.floor(0.8 * 7), "nevus": math.floor(0.8 * 9)}


def test_split_deterministic_and_seed_sensitive():
    catalog = _clone_catalog(40, 40)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    t1, _ = stratified_split(group, SplitSpec(seed=5), catalog)
    t2, _ = stratified_split(group, SplitSpec(seed=5), catalog)
    t3, _ = stratified_split(group, SplitSpec(seed=6), catalog)
    assert t1.member_ids == t2.member_ids
    assert t1.member_ids != t3.member_ids


def test_split_keeps_catalog_order():
    catalog = _clone_catalog(10, 10)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    train, hold = stratified_split(group, SplitSpec(seed=2), catalog)
    order = {i: k for k, i in enumerate(group.member_ids)}
    assert list(train.member_ids) == sorted(train.member_ids, key=order.get)
    assert list(hold.member_ids) == sorted(hold.member_ids, key=order.get)


def test_split_class_too_small():
    catalog = _clone_catalog(1, 10)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    with pytest.raises(ClassTooSmall):
        stratified_split(group, SplitSpec(), catalog)


def test_split_lesion_aware_keeps_lesions_together():
    lesions = {f"m{k:05d}": f"L{k // 2}" for k in range(20)}
    catalog = _clone_catalog(20, 30, lesions=lesions)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    train, hold = stratified_split(group, SplitSpec(seed=0), catalog)
    assert leakage_guard(train, hold, catalog) == []


def test_split_lesion_aware_off_can_leak():
    lesions = {f"m{k:05d}": f"L{k // 2}" for k in range(20)}
    catalog = _clone_catalog(20, 30, lesions=lesions)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    seeds_with_leaks = 0
    for seed in range(6):
        train, hold = stratified_split(group, SplitSpec(seed=seed, lesion_aware=False), catalog)
        if leakage_guard(train, hold, catalog):
            seeds_with_leaks += 1
    assert seeds_with_leaks > 0


def test_leakage_guard_reports_sorted():
    catalog = _clone_catalog(4, 4, lesions={"m00000": "LZ", "m00001": "LZ", "m00002": "LA", "m00003": "LA"})
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    fake_train = group.__class__(**{**group.__dict__, "member_ids": ("m00000", "m00002")})
    fake_hold = group.__class__(**{**group.__dict__, "member_ids": ("m00001", "m00003")})
    assert leakage_guard(fake_train, fake_hold, catalog) == ["LA", "LZ"]


def test_split_spec_validation():
    with pytest.raises(DataError):
        SplitSpec(train_fraction=1.0)
    with pytest.raises(DataError):
        SplitSpec(train_fraction=0.0)


@settings(max_examples=15)
@given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 1000))
def test_split_sizes_property(n_mel, n_nev, seed):
    catalog = _clone_catalog(n_mel, n_nev)
    group = by_abbrev(apply_grouping(catalog, "HAM", LOCMAP))["H"]
    train, hold = stratified_split(group, SplitSpec(seed=seed), catalog)
    assert train.class_counts["melanoma"] == math.floor(0.8 * n_mel)
    assert train.class_counts["nevus"] == math.floor(0.8 * n_nev)
    assert hold.total == group.total - train.total


# ------------------------------------------------------------------ manifest


def test_manifest_round_trip(small_catalog):
    groups = apply_grouping(small_catalog, "HAM", LOCMAP)
    again = read_manifest(write_manifest(groups))
    assert again == groups


def test_manifest_bad_json():
    with pytest.raises(DataError):
        read_manifest("{not json")


def test_members_by_class(small_catalog):
    groups = by_abbrev(apply_grouping(small_catalog, "HAM", LOCMAP))
    split = members_by_class(groups["H"], small_catalog)
    assert split[Diagnosis.MELANOMA] == ("img001", "img002")
    assert split[Diagnosis.NEVUS] == ()
