"""Catalog parsing, normalization, localization mapping, duplicates."""

import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dermshift.errors import DuplicateImageId, MalformedCsv, MissingRequiredColumn
from dermshift.metadata import (
    Catalog,
    Diagnosis,
    DuplicateGroup,
    LocalizationBucket,
    LocalizationMap,
    MetadataRecord,
    Sex,
    default_localization_map,
    detect_duplicates,
    load_localization_map,
    map_localization,
    merge_catalogs,
    parse_catalog,
    serialize_catalog,
)

from .conftest import catalog_csv


# ------------------------------------------------------------------ parsing


def test_parse_basic_fields(small_catalog):
    rec = small_catalog.records[0]
    assert rec.image_id == "img001"
    assert rec.diagnosis is Diagnosis.MELANOMA
    assert rec.age_years == 45
    assert rec.origin == "HAM"
    assert rec.sex is Sex.MALE
    assert rec.lesion_id == "les01"


def test_parse_absent_optionals(small_catalog):
    rec = small_catalog.by_id()["img006"]
    assert rec.age_years is None
    assert rec.lesion_id is None
    assert rec.sex is Sex.FEMALE


def test_diagnosis_case_insensitive():
    text = catalog_csv([("a", None, "MELANOMA", 40, "torso", "HAM", None),
                        ("b", None, "Nevus", 40, "torso", "HAM", None),
                        ("c", None, "dermatofibroma", 40, "torso", "HAM", None)])
    catalog = parse_catalog(text, "t")
    assert [r.diagnosis for r in catalog.records] == [
        Diagnosis.MELANOMA,
        Diagnosis.NEVUS,
        Diagnosis.OTHER,
    ]


def test_origin_normalized():
    text = catalog_csv([("a", None, "nevus", 40, "torso", " ham ", None)])
    assert parse_catalog(text, "t").records[0].origin == "HAM"


def test_missing_required_column():
    text = "image_id,age_years\nx,40\n"
    with pytest.raises(MissingRequiredColumn):
        parse_catalog(text, "t")


def test_malformed_age_rejects_file():
    text = catalog_csv([("a", None, "nevus", 40, "torso", "HAM", None),
                        ("b", None, "nevus", "forty", "torso", "HAM", None)])
    with pytest.raises(MalformedCsv) as err:
        parse_catalog(text, "t")
    assert err.value.row_index == 3


@pytest.mark.parametrize("age", [-1, 121, 500])
def test_age_out_of_range(age):
    text = catalog_csv([("a", None, "nevus", age, "torso", "HAM", None)])
    with pytest.raises(MalformedCsv):
        parse_catalog(text, "t")


@pytest.mark.parametrize("age", [0, 30, 120])
def test_age_boundaries_accepted(age):
    text = catalog_csv([("a", None, "nevus", age, "torso", "HAM", None)])
    assert parse_catalog(text, "t").records[0].age_years == age


def test_duplicate_image_id_rejected():
    text = catalog_csv([("a", None, "nevus", 40, "torso", "HAM", None),
                        ("a", None, "nevus", 41, "torso", "HAM", None)])
    with pytest.raises(DuplicateImageId):
        parse_catalog(text, "t")


def test_ragged_row_rejected():
    text = "image_id,diagnosis\nx,nevus,extra\n"
    with pytest.raises(MalformedCsv):
        parse_catalog(text, "t")


def test_empty_image_id_rejected():
    text = catalog_csv([("", None, "nevus", 40, "torso", "HAM", None)])
    with pytest.raises(MalformedCsv):
        parse_catalog(text, "t")


def test_not_utf8_rejected():
    with pytest.raises(MalformedCsv):
        parse_catalog(b"\xff\xfe\x00bad", "t")


def test_record_order_preserved(small_catalog):
    ids = [r.image_id for r in small_catalog.records]
    assert ids == sorted(ids)
    assert ids[0] == "img001"


# --------------------------------------------------------------- round trip


_ids = st.text(alphabet="abcdefghij0123456789", min_size=1, max_size=10)


@st.composite
def catalogs(draw):
    n = draw(st.integers(0, 12))
    ids = draw(st.lists(_ids, min_size=n, max_size=n, unique=True))
    records = []
    for image_id in ids:
        records.append(
            MetadataRecord(
                image_id=image_id,
                diagnosis=draw(st.sampled_from(list(Diagnosis))),
                origin=draw(st.sampled_from(["HAM", "BCN", "MSK", "OTHERCLINIC"])),
                localization_raw=draw(st.sampled_from(["torso", "head/neck", "", "palms/soles"])),
                lesion_id=draw(st.one_of(st.none(), _ids)),
                age_years=draw(st.one_of(st.none(), st.integers(0, 120))),
                sex=draw(st.sampled_from([None, Sex.MALE, Sex.FEMALE])),
            )
        )
    return Catalog(records=tuple(records), source_name="prop")


@given(catalogs())
def test_serialize_parse_round_trip(catalog):
    again = parse_catalog(serialize_catalog(catalog), "prop")
    assert again.records == catalog.records


def test_serialize_deterministic(small_catalog):
    assert serialize_catalog(small_catalog) == serialize_catalog(small_catalog)


# --------------------------------------------------------------- localization


def test_default_map_known_values():
    locmap = default_localization_map()
    assert map_localization("head/neck", locmap) is LocalizationBucket.HEAD_NECK
    assert map_localization("anterior torso", locmap) is LocalizationBucket.BODY
    assert map_localization("palms/soles", locmap) is LocalizationBucket.PALMS_SOLES
    assert map_localization("oral/genital", locmap) is LocalizationBucket.ORAL_GENITAL


def test_map_miss_is_unknown_and_warns(caplog):
    locmap = default_localization_map()
    with caplog.at_level(logging.WARNING, logger="dermshift.metadata"):
        assert map_localization("zzz-unmapped-site", locmap) is LocalizationBucket.UNKNOWN
    assert any("zzz-unmapped-site" in m for m in caplog.messages)


def test_map_warns_once_per_value(caplog):
    locmap = default_localization_map()
    with caplog.at_level(logging.WARNING, logger="dermshift.metadata"):
        map_localization("weird-site", locmap)
        map_localization("weird-site", locmap)
    assert sum("weird-site" in m for m in caplog.messages) == 1


def test_map_case_and_whitespace_insensitive():
    locmap = LocalizationMap({"Torso": LocalizationBucket.BODY})
    assert map_localization("  TORSO ", locmap) is LocalizationBucket.BODY


def test_map_total():
    locmap = LocalizationMap({})
    assert map_localization("anything", locmap) is LocalizationBucket.UNKNOWN


def test_load_localization_map_rejects_bad_bucket():
    with pytest.raises(MalformedCsv):
        load_localization_map("raw,bucket\ntorso,bodyy\n")


def test_load_localization_map_requires_header():
    with pytest.raises(MissingRequiredColumn):
        load_localization_map("a,b\ntorso,body\n")


# ----------------------------------------------------------------- duplicates


def test_detect_duplicates_groups_and_order():
    text = catalog_csv(
        [
            ("i1", "lesB", "nevus", 40, "torso", "HAM", None),
            ("i2", "lesA", "nevus", 40, "torso", "HAM", None),
            ("i3", "lesB", "nevus", 40, "torso", "HAM", None),
            ("i4", None, "nevus", 40, "torso", "HAM", None),
            ("i5", "lesA", "nevus", 40, "torso", "HAM", None),
            ("i6", "lesC", "nevus", 40, "torso", "HAM", None),
        ]
    )
    catalog = parse_catalog(text, "t")
    groups = detect_duplicates(catalog)
    assert groups == [
        DuplicateGroup(lesion_id="lesA", image_ids=("i2", "i5")),
        DuplicateGroup(lesion_id="lesB", image_ids=("i1", "i3")),
    ]


def test_detect_duplicates_empty():
    text = catalog_csv([("i1", None, "nevus", 40, "torso", "HAM", None)])
    assert detect_duplicates(parse_catalog(text, "t")) == []


# -------------------------------------------------------------------- merging


def test_merge_catalogs_preserves_order(small_catalog):
    text = catalog_csv([("extra1", None, "nevus", 40, "torso", "BCN", None)])
    other = parse_catalog(text, "other")
    merged = merge_catalogs([small_catalog, other], "merged")
    assert len(merged) == len(small_catalog) + 1
    assert merged.records[-1].image_id == "extra1"


def test_merge_catalogs_rejects_cross_duplicates(small_catalog):
    with pytest.raises(DuplicateImageId):
        merge_catalogs([small_catalog, small_catalog], "merged")
