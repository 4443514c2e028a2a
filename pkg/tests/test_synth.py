"""Synthetic corpus generation, shifts, and the stand-in discriminator."""

import numpy as np
import pytest

from dermshift.divergence import BootstrapConfig, MetricKind
from dermshift.errors import DataError
from dermshift.metadata import Diagnosis, parse_catalog
from dermshift.metrics import auroc
from dermshift.synth import (
    ShiftSpec,
    corpus_group,
    corpus_histograms,
    gen_corpus,
    monotonicity_experiment,
    persist_corpus,
    synthetic_discriminator_scores,
    synthetic_embeddings,
    write_shift_table,
)


# ------------------------------------------------------------------ ShiftSpec


def test_shift_spec_validation():
    with pytest.raises(DataError):
        ShiftSpec(brightness_offset=0.6)
    with pytest.raises(DataError):
        ShiftSpec(brightness_offset=-0.6)
    with pytest.raises(DataError):
        ShiftSpec(contrast_scale=0.0)
    with pytest.raises(DataError):
        ShiftSpec(noise_sigma=-0.1)


def test_shift_spec_identity_flag():
    assert ShiftSpec().is_identity
    assert ShiftSpec(seed=99).is_identity  # seed alone changes nothing
    assert not ShiftSpec(brightness_offset=0.1).is_identity
    assert not ShiftSpec(contrast_scale=1.2).is_identity
    assert not ShiftSpec(hue_rotation_deg=10.0).is_identity
    assert not ShiftSpec(noise_sigma=0.01).is_identity


# ----------------------------------------------------------------- gen_corpus


def test_corpus_structure():
    corpus = gen_corpus(6, base_seed=3, size=32, source_name="SRC")
    ids = [r.image_id for r in corpus.catalog.records]
    assert ids == [f"SRC_{i:05d}" for i in range(6)]
    diagnoses = [r.diagnosis for r in corpus.catalog.records]
    assert diagnoses == [Diagnosis.NEVUS, Diagnosis.MELANOMA] * 3
    assert all(r.age_years > 30 for r in corpus.catalog.records)
    assert all(r.origin == "SRC" for r in corpus.catalog.records)
    assert all(img.pixels.shape == (32, 32, 3) for img in corpus.images)


def test_corpus_deterministic():
    a = gen_corpus(4, base_seed=5, size=32)
    b = gen_corpus(4, base_seed=5, size=32)
    for img_a, img_b in zip(a.images, b.images):
        np.testing.assert_array_equal(img_a.pixels, img_b.pixels)
    c = gen_corpus(4, base_seed=6, size=32)
    assert any(
        not np.array_equal(x.pixels, y.pixels) for x, y in zip(a.images, c.images)
    )


def test_identity_shift_is_bit_exact():
    base = gen_corpus(5, base_seed=11, size=32, source_name="BASE")
    twin = gen_corpus(5, base_seed=11, shift=ShiftSpec(seed=42), size=32, source_name="TWIN")
    for img_b, img_t in zip(base.images, twin.images):
        np.testing.assert_array_equal(img_b.pixels, img_t.pixels)


def test_brightness_shift_raises_mean():
    base = gen_corpus(4, base_seed=2, size=32)
    lifted = gen_corpus(4, base_seed=2, shift=ShiftSpec(brightness_offset=0.2), size=32)
    for img_b, img_l in zip(base.images, lifted.images):
        assert img_l.pixels.mean() > img_b.pixels.mean() + 20


def test_shift_scenes_share_base():
    """Shifts transform the same underlying scene, not a new one."""
    base = gen_corpus(3, base_seed=9, size=32)
    noisy = gen_corpus(3, base_seed=9, shift=ShiftSpec(noise_sigma=0.01), size=32)
    for img_b, img_n in zip(base.images, noisy.images):
        diff = img_n.pixels.astype(int) - img_b.pixels.astype(int)
        assert np.abs(diff).mean() < 4.0  # small perturbation of the same scene


def test_gen_corpus_rejects_empty():
    with pytest.raises(DataError):
        gen_corpus(0, base_seed=1)


def test_corpus_group_counts():
    corpus = gen_corpus(7, base_seed=1, size=32, source_name="G")
    group = corpus_group(corpus)
    assert group.total == 7
    assert group.class_counts["nevus"] == 4
    assert group.class_counts["melanoma"] == 3
    assert group.member_ids == tuple(r.image_id for r in corpus.catalog.records)


def test_corpus_histograms_shape():
    corpus = gen_corpus(3, base_seed=1, size=32)
    hists = corpus_histograms(corpus)
    assert len(hists) == 3
    for arr in hists.values():
        assert arr.shape == (3, 256)
        np.testing.assert_allclose(arr.sum(axis=1), 1.0, atol=1e-9)


def test_synthetic_embeddings_deterministic():
    corpus = gen_corpus(4, base_seed=8, size=32)
    a = synthetic_embeddings(corpus, seed=5)
    b = synthetic_embeddings(corpus, seed=5)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.ids == tuple(r.image_id for r in corpus.catalog.records)
    c = synthetic_embeddings(corpus, seed=6)
    assert not np.array_equal(a.values, c.values)


# -------------------------------------------------------------- discriminator


def test_discriminator_identical_corpora_near_chance():
    base = gen_corpus(60, base_seed=21, size=32, source_name="A")
    twin = gen_corpus(60, base_seed=21, shift=ShiftSpec(seed=1), size=32, source_name="B")
    scores = synthetic_discriminator_scores(base, twin, seed=0)
    value = auroc(scores)
    assert 0.3 < value < 0.7


def test_discriminator_separated_corpora_high():
    base = gen_corpus(60, base_seed=21, size=32, source_name="A")
    bright = gen_corpus(
        60, base_seed=21, shift=ShiftSpec(brightness_offset=0.3), size=32, source_name="B"
    )
    assert auroc(synthetic_discriminator_scores(base, bright, seed=0)) > 0.9


def test_discriminator_scores_held_out_only():
    base = gen_corpus(10, base_seed=4, size=32, source_name="A")
    other = gen_corpus(10, base_seed=5, size=32, source_name="B")
    scores = synthetic_discriminator_scores(base, other)
    # only odd-index records are scored: 5 + 5
    assert scores.n == 10
    assert set(scores.ids) == {
        r.image_id for r in base.catalog.records[1::2]
    } | {r.image_id for r in other.catalog.records[1::2]}
    assert scores.labels.sum() == 5


def test_discriminator_needs_two_per_side():
    a = gen_corpus(1, base_seed=1, size=32, source_name="A")
    b = gen_corpus(4, base_seed=2, size=32, source_name="B")
    with pytest.raises(DataError):
        synthetic_discriminator_scores(a, b)


# --------------------------------------------------------------- monotonicity


def test_monotonicity_smoke_jsd():
    out = monotonicity_experiment(
        MetricKind.JSD,
        deltas=[0.0, 0.15, 0.3],
        n=16,
        config=BootstrapConfig(iterations=5, sample_size=20, seed=0),
        size=32,
    )
    means = [out[d].mean for d in (0.0, 0.15, 0.3)]
    assert means[0] < means[1] < means[2]


def test_monotonicity_smoke_cosine():
    out = monotonicity_experiment(
        MetricKind.COSINE,
        deltas=[0.0, 0.15, 0.3],
        n=16,
        config=BootstrapConfig(iterations=5, sample_size=20, seed=0),
        size=32,
    )
    means = [out[d].mean for d in (0.0, 0.15, 0.3)]
    assert means[0] > means[1] > means[2]


def test_monotonicity_validates_deltas():
    with pytest.raises(DataError):
        monotonicity_experiment(MetricKind.JSD, deltas=[0.3, 0.0], n=4, size=32)
    with pytest.raises(DataError):
        monotonicity_experiment(MetricKind.JSD, deltas=[0.1, 0.2], n=4, size=32)


# -------------------------------------------------------------------- persist


def test_persist_corpus_round_trip(tmp_path):
    corpus = gen_corpus(3, base_seed=2, size=32, source_name="PC")
    paths = persist_corpus(corpus, tmp_path / "out")
    pngs = sorted(paths["images"].glob("*.png"))
    assert [p.stem for p in pngs] == [r.image_id for r in corpus.catalog.records]
    back = parse_catalog(paths["catalog"].read_bytes(), source_name="PC")
    assert back.records == corpus.catalog.records

    from PIL import Image

    arr = np.asarray(Image.open(pngs[0]).convert("RGB"))
    np.testing.assert_array_equal(arr, corpus.images[0].pixels)


def test_write_shift_table():
    text = write_shift_table(
        {"D1": ShiftSpec(brightness_offset=0.1), "BASE": ShiftSpec()}
    )
    lines = text.splitlines()
    assert lines[0].startswith("corpus,")
    assert len(lines) == 3
    assert lines[1].startswith("BASE,")  # sorted by corpus name
