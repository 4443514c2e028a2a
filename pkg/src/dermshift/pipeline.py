"""End-to-end pipeline: stages, artifacts and the run manifest.

Each stage writes plain-text artifacts (CSV or JSON) under the output
directory and registers them in the run manifest together with their
sha256 checksums. Outputs carry no timestamps or machine identifiers,
so a repeated run over the same inputs and configuration reproduces
every artifact byte for byte.

In synthetic mode the pipeline first generates paired shifted corpora
plus stand-in embeddings and discriminator predictions, then runs the
normal stages over them, which exercises every downstream contract
without any real data.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import PipelineConfig, config_snapshot
from .divergence import (
    BootstrapConfig,
    DivergenceInputs,
    DivergenceSummary,
    MetricKind,
    bootstrap_divergence,
    histogram,
    sample_size_sweep,
    write_iterations_csv,
    write_summary_csv,
)
from .embeddings import EmbeddingMatrix, read_embeddings, write_embeddings
from .errors import ConfigError, DataError, EmptyClass
from .grouping import (
    GroupedDataset,
    apply_grouping,
    exclude_small,
    members_by_class,
    write_manifest,
)
from .imagestats import image_stats, load_image, summarize, write_stats_csv, sample_per_class
from .metadata import Catalog, Diagnosis, default_localization_map, load_localization_map, merge_catalogs, read_catalog_file, serialize_catalog
from .metrics import (
    CorrelationMatrix,
    PerformanceRow,
    PerformanceTable,
    auroc,
    balanced_accuracy,
    correlation_matrix,
    correlation_report_json,
    read_predictions_csv,
    write_predictions_csv,
)
from .synth import (
    ShiftSpec,
    SynthCorpus,
    gen_corpus,
    synthetic_discriminator_scores,
    synthetic_embeddings,
    write_shift_table,
)
from .tsne import TsneConfig, tsne, write_projection_csv

logger = logging.getLogger(__name__)

CLASSES = (Diagnosis.MELANOMA, Diagnosis.NEVUS)


@dataclass
class RunManifest:
    version: str
    backend: str
    config: dict
    stages: dict[str, dict[str, str]] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "backend": self.backend,
            "config": self.config,
            "stages": self.stages,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Emitter:
    """Writes stage artifacts under out_dir and records their checksums."""

    def __init__(self, out_dir: Path, manifest: RunManifest):
        self.out_dir = out_dir
        self.manifest = manifest

    def emit(self, stage: str, relpath: str, content: str | bytes) -> Path:
        data = content.encode("utf-8") if isinstance(content, str) else content
        path = self.out_dir / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.manifest.stages.setdefault(stage, {})[relpath] = _sha256(data)
        return path


def _subset(corpus: SynthCorpus, keep: list[int]) -> SynthCorpus:
    records = tuple(corpus.catalog.records[i] for i in keep)
    images = tuple(corpus.images[i] for i in keep)
    return SynthCorpus(
        images=images,
        catalog=Catalog(records=records, source_name=corpus.catalog.source_name),
        shift=corpus.shift,
    )


def _class_indices(corpus: SynthCorpus, diagnosis: Diagnosis) -> list[int]:
    return [i for i, r in enumerate(corpus.catalog.records) if r.diagnosis is diagnosis]


def stage_synth(config: PipelineConfig, emitter: _Emitter) -> PipelineConfig:
    """Generate corpora and stand-in inputs; returns a config rewired to them."""
    from PIL import Image

    base = gen_corpus(config.synth_n, config.seed, ShiftSpec(), size=config.synth_size, source_name="BASE")
    corpora = [base]
    shifts = {"BASE": ShiftSpec()}
    for k, delta in enumerate(config.synth_deltas):
        spec = ShiftSpec(brightness_offset=float(delta))
        name = f"D{k}"
        corpora.append(
            gen_corpus(config.synth_n, config.seed, spec, size=config.synth_size, source_name=name)
        )
        shifts[name] = spec

    images_dir = emitter.out_dir / "synth" / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    for corpus in corpora:
        for rec, img in zip(corpus.catalog.records, corpus.images):
            Image.fromarray(img.pixels, mode="RGB").save(images_dir / f"{rec.image_id}.png")

    merged = merge_catalogs([c.catalog for c in corpora], source_name="synth")
    emitter.emit("synth", "synth/catalog.csv", serialize_catalog(merged))
    emitter.emit("synth", "synth/shifts.csv", write_shift_table(shifts))

    parts = [synthetic_embeddings(c, seed=config.seed) for c in corpora]
    matrix = EmbeddingMatrix(
        ids=tuple(i for p in parts for i in p.ids),
        values=np.vstack([p.values for p in parts]),
    )
    emitter.emit("synth", "synth/embeddings.csv", write_embeddings(matrix))

    preds_dir = "synth/predictions"
    for diagnosis in CLASSES:
        base_idx = _class_indices(base, diagnosis)
        half_a = _subset(base, base_idx[0::2])
        half_b = _subset(base, base_idx[1::2])
        preds = synthetic_discriminator_scores(half_a, half_b, seed=config.seed)
        emitter.emit(
            "synth",
            f"{preds_dir}/preds__baseline__{diagnosis.value}.csv",
            write_predictions_csv(preds),
        )
        source_sub = _subset(base, base_idx)
        for corpus in corpora[1:]:
            target_sub = _subset(corpus, _class_indices(corpus, diagnosis))
            preds = synthetic_discriminator_scores(source_sub, target_sub, seed=config.seed)
            emitter.emit(
                "synth",
                f"{preds_dir}/preds__{corpus.catalog.source_name}__{diagnosis.value}.csv",
                write_predictions_csv(preds),
            )

    rewired = replace(
        config,
        catalogs=(emitter.out_dir / "synth" / "catalog.csv",),
        image_root=images_dir,
        embeddings=emitter.out_dir / "synth" / "embeddings.csv",
        predictions_dir=emitter.out_dir / "synth" / "predictions",
        source_origin="BASE",
        source_dataset="BASE",
        resize=config.synth_size,
    )
    return rewired


def stage_ingest(config: PipelineConfig) -> Catalog:
    if not config.catalogs:
        raise ConfigError("no catalog files configured")
    catalogs = [read_catalog_file(p) for p in config.catalogs]
    return merge_catalogs(catalogs, source_name="merged")


def stage_group(
    catalog: Catalog, config: PipelineConfig, emitter: _Emitter
) -> list[GroupedDataset]:
    locmap = (
        load_localization_map(Path(config.localization_map).read_bytes())
        if config.localization_map
        else default_localization_map()
    )
    groups = apply_grouping(catalog, config.source_origin, locmap)
    kept, removed = exclude_small(groups, config.min_group_total)
    emitter.emit("group", "groups.json", write_manifest(kept))
    emitter.emit("group", "groups_removed.json", write_manifest(removed))
    if not kept:
        raise DataError("no dataset passed the size threshold")
    return kept


def _image_path(root: Path, image_id: str) -> Path:
    for ext in (".png", ".jpg", ".jpeg"):
        path = root / f"{image_id}{ext}"
        if path.exists():
            return path
    raise DataError(f"no image file for {image_id} under {root}")


def stage_stats(
    groups: list[GroupedDataset],
    catalog: Catalog,
    config: PipelineConfig,
    emitter: _Emitter,
) -> None:
    if config.image_root is None:
        raise ConfigError("stats stage needs image_root")
    rows = []
    summaries = []
    for group in groups:
        for diagnosis in CLASSES:
            try:
                ids = sample_per_class(
                    group, catalog, diagnosis, n=config.stats_sample_n, seed=config.seed
                )
            except EmptyClass:
                continue
            records = []
            for image_id in ids:
                img = load_image(_image_path(config.image_root, image_id), resize_to=config.resize)
                records.append(image_stats(img))
            rows.extend(
                (i, diagnosis.value, group.abbrev, r) for i, r in zip(ids, records)
            )
            for stat in ("brightness", "rms_contrast", "saturation", "hue", "blur"):
                box = summarize(records, stat)
                summaries.append((group.abbrev, diagnosis.value, stat, box))
    emitter.emit("stats", "stats.csv", write_stats_csv(rows))

    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["dataset", "class", "stat", "min", "q1", "median", "q3", "max", "lower_fence", "upper_fence", "n"]
    )
    for abbrev, cls, stat, box in summaries:
        writer.writerow(
            [abbrev, cls, stat]
            + [
                format(v, ".9g")
                for v in (box.minimum, box.q1, box.median, box.q3, box.maximum, box.lower_fence, box.upper_fence)
            ]
            + [box.n]
        )
    emitter.emit("stats", "box_summaries.csv", buf.getvalue())


def _load_histograms(
    groups: list[GroupedDataset], catalog: Catalog, config: PipelineConfig
) -> dict[str, np.ndarray]:
    if config.image_root is None:
        raise ConfigError("divergence stage needs image_root for histograms")
    hists: dict[str, np.ndarray] = {}
    for group in groups:
        for image_id in group.member_ids:
            if image_id in hists:
                continue
            img = load_image(_image_path(config.image_root, image_id), resize_to=config.resize)
            hists[image_id] = histogram(img).bins
    return hists


def _source_group(groups: list[GroupedDataset], config: PipelineConfig) -> GroupedDataset:
    for group in groups:
        if group.abbrev == config.source_dataset:
            return group
    raise ConfigError(f"source dataset {config.source_dataset!r} not among kept groups")


def stage_divergence(
    groups: list[GroupedDataset],
    catalog: Catalog,
    config: PipelineConfig,
    emitter: _Emitter,
    embeddings: EmbeddingMatrix | None,
) -> list[DivergenceSummary]:
    source = _source_group(groups, config)
    hists = _load_histograms(groups, catalog, config)
    inputs = DivergenceInputs(catalog=catalog, histograms=hists, embeddings=embeddings)
    bootstrap = BootstrapConfig(
        iterations=config.iterations, sample_size=config.sample_size, seed=config.seed
    )
    metrics = [MetricKind.JSD] + ([MetricKind.COSINE] if embeddings is not None else [])
    summaries: list[DivergenceSummary] = []
    for metric in metrics:
        for target in groups:
            for diagnosis in CLASSES:
                try:
                    summaries.append(
                        bootstrap_divergence(source, target, diagnosis, metric, bootstrap, inputs)
                    )
                except EmptyClass:
                    continue
    emitter.emit("divergence", "divergence_iterations.csv", write_iterations_csv(summaries))
    emitter.emit("divergence", "divergence_summary.csv", write_summary_csv(summaries))

    if config.run_sweep and config.sweep_sizes:
        sweep_rows: list[DivergenceSummary] = []
        for metric in metrics:
            for target in groups:
                for diagnosis in CLASSES:
                    try:
                        swept = sample_size_sweep(
                            source, target, diagnosis, metric, config.sweep_sizes, bootstrap, inputs
                        )
                    except EmptyClass:
                        continue
                    sweep_rows.extend(swept[size] for size in config.sweep_sizes)
        emitter.emit("sweep", "sweep_summary.csv", write_summary_csv(sweep_rows))
    return summaries


def stage_tsne(
    groups: list[GroupedDataset],
    catalog: Catalog,
    config: PipelineConfig,
    emitter: _Emitter,
    embeddings: EmbeddingMatrix,
) -> None:
    dataset_of: dict[str, str] = {}
    for group in groups:
        for image_id in group.member_ids:
            dataset_of[image_id] = group.abbrev
    class_of = {r.image_id: r.diagnosis.value for r in catalog.records}
    index = embeddings.index_of()
    cfg = TsneConfig(
        perplexity=config.tsne_perplexity,
        iterations=config.tsne_iterations,
        learning_rate=config.tsne_learning_rate,
        max_points=config.tsne_max_points,
        seed=config.seed,
    )
    for diagnosis in CLASSES:
        ids = sorted(
            i
            for group in groups
            for i in members_by_class(group, catalog)[diagnosis]
            if i in index
        )
        if len(ids) < 4 or config.tsne_perplexity >= len(ids):
            logger.info("skipping t-SNE for %s: %d usable points", diagnosis.value, len(ids))
            continue
        matrix = EmbeddingMatrix(ids=tuple(ids), values=embeddings.select(tuple(ids)))
        projection = tsne(matrix, cfg)
        emitter.emit(
            "tsne",
            f"projection_{diagnosis.value}.csv",
            write_projection_csv(projection, dataset_of, class_of),
        )


def stage_metrics(config: PipelineConfig, emitter: _Emitter) -> list[dict]:
    """Score every predictions CSV; drops are relative to the baseline files."""
    if config.predictions_dir is None:
        raise ConfigError("metrics stage needs predictions_dir")
    preds_dir = Path(config.predictions_dir)
    files = sorted(preds_dir.glob("preds__*__*.csv"))
    if not files:
        raise DataError(f"no predictions files under {preds_dir}")

    rows: list[dict] = []
    baselines: dict[str, dict[str, float]] = {}
    parsed = []
    for path in files:
        parts = path.stem.split("__")
        if len(parts) != 3:
            raise DataError(f"bad predictions filename {path.name}")
        _, target, cls = parts
        preds = read_predictions_csv(path.read_text("utf-8"))
        entry = {
            "target": target,
            "class": cls,
            "n": preds.n,
            "auroc": auroc(preds),
            "balanced_accuracy": balanced_accuracy(preds),
        }
        parsed.append(entry)
        if target == "baseline":
            baselines[cls] = entry

    for entry in parsed:
        base = baselines.get(entry["class"])
        if base is not None and entry["target"] != "baseline":
            entry["auroc_drop"] = entry["auroc"] - base["auroc"]
            entry["bacc_drop"] = entry["balanced_accuracy"] - base["balanced_accuracy"]
        else:
            entry["auroc_drop"] = None
            entry["bacc_drop"] = None
        rows.append(entry)
    rows.sort(key=lambda r: (r["target"], r["class"]))

    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(["target", "class", "n", "auroc", "balanced_accuracy", "auroc_drop", "bacc_drop"])
    for r in rows:
        writer.writerow(
            [
                r["target"],
                r["class"],
                r["n"],
                format(r["auroc"], ".9g"),
                format(r["balanced_accuracy"], ".9g"),
                "" if r["auroc_drop"] is None else format(r["auroc_drop"], ".9g"),
                "" if r["bacc_drop"] is None else format(r["bacc_drop"], ".9g"),
            ]
        )
    emitter.emit("metrics", "metrics.csv", buf.getvalue())
    return rows


def stage_correlate(
    summaries: list[DivergenceSummary],
    metric_rows: list[dict],
    emitter: _Emitter,
) -> dict[str, CorrelationMatrix]:
    """Join divergence means with AUROC drops and correlate per class."""
    jsd_mean: dict[tuple[str, str], float] = {}
    cos_mean: dict[tuple[str, str], float] = {}
    for s in summaries:
        key = (s.target, s.diagnosis.value)
        if s.metric is MetricKind.JSD:
            jsd_mean[key] = s.mean
        else:
            cos_mean[key] = s.mean

    table_rows: dict[tuple[str, Diagnosis], PerformanceRow] = {}
    for r in metric_rows:
        key = (r["target"], r["class"])
        if r["auroc_drop"] is None or key not in jsd_mean or key not in cos_mean:
            continue
        table_rows[(r["target"], Diagnosis(r["class"]))] = PerformanceRow(
            jsd_mean=jsd_mean[key],
            cosine_mean=cos_mean[key],
            auroc=r["auroc"],
            auroc_drop=r["auroc_drop"],
            balanced_accuracy=r["balanced_accuracy"],
        )
    table = PerformanceTable(rows=table_rows)

    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(["target", "class", "jsd_mean", "cosine_mean", "auroc", "auroc_drop"])
    for (target, diagnosis), row in sorted(table_rows.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        writer.writerow(
            [
                target,
                diagnosis.value,
                format(row.jsd_mean, ".9g"),
                format(row.cosine_mean, ".9g"),
                format(row.auroc, ".9g"),
                format(row.auroc_drop, ".9g"),
            ]
        )
    emitter.emit("correlate", "performance_table.csv", buf.getvalue())

    matrices: dict[str, CorrelationMatrix] = {}
    for diagnosis in CLASSES:
        if len(table.targets(diagnosis)) >= 2:
            matrices[diagnosis.value] = correlation_matrix(table, diagnosis)
    emitter.emit("correlate", "correlation_report.json", correlation_report_json(matrices))
    return matrices


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Run the configured stages; returns the written manifest."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        version=__version__, backend=kernels.BACKEND, config=config_snapshot(config)
    )
    emitter = _Emitter(out_dir, manifest)

    if config.synth:
        config = stage_synth(config, emitter)
        manifest.config = config_snapshot(config)

    catalog = stage_ingest(config)
    groups = stage_group(catalog, config, emitter)

    embeddings = None
    if config.embeddings is not None:
        embeddings = read_embeddings(Path(config.embeddings).read_text("utf-8"))

    if config.run_stats:
        stage_stats(groups, catalog, config, emitter)

    summaries: list[DivergenceSummary] = []
    if config.run_divergence:
        summaries = stage_divergence(groups, catalog, config, emitter, embeddings)

    if config.run_tsne and embeddings is not None:
        stage_tsne(groups, catalog, config, emitter, embeddings)

    metric_rows: list[dict] = []
    if config.run_metrics and config.predictions_dir is not None:
        metric_rows = stage_metrics(config, emitter)

    if config.run_correlate and summaries and metric_rows:
        stage_correlate(summaries, metric_rows, emitter)

    emit_report(manifest, emitter)
    (out_dir / "manifest.json").write_text(manifest.to_json(), "utf-8")
    return manifest


def emit_report(manifest: RunManifest, emitter: _Emitter) -> None:
    """Small top-level report: which stages ran and what they produced."""
    report = {
        "backend": manifest.backend,
        "stages": {stage: sorted(files) for stage, files in sorted(manifest.stages.items())},
        "version": manifest.version,
    }
    emitter.emit("report", "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
