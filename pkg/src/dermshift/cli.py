"""Command-line interface.

Subcommands map onto pipeline stages so each step can run standalone
over files, with ``run`` executing the configured stages end to end.
Exit codes: 0 success, 1 configuration or usage error, 2 data error,
3 network error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import CACHE_ENV_VAR, PipelineConfig, load_config
from .errors import ConfigError, DataError, DermshiftError, NetworkError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NETWORK = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors are config errors."""

    def error(self, message: str):
        raise ConfigError(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")
    parser.add_argument("--out-dir", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dermshift", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dermshift {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download catalog metadata from an archive endpoint")
    _add_common(p)
    p.add_argument("--endpoint", required=True, help="paginated JSON endpoint URL")
    p.add_argument("--param", action="append", default=[], metavar="K=V", help="query parameter")
    p.add_argument("--cache-dir", type=Path, default=None, help=f"page cache (or ${CACHE_ENV_VAR})")
    p.add_argument("--out", type=Path, required=True, help="catalog CSV to write")
    p.add_argument("--origin", default="", help="fallback origin label")

    p = sub.add_parser("group", help="group a catalog into datasets")
    _add_common(p)
    p.add_argument("--catalog", action="append", type=Path, required=True)
    p.add_argument("--source-origin", default=None)
    p.add_argument("--localization-map", type=Path, default=None)
    p.add_argument("--min-total", type=int, default=None)

    p = sub.add_parser("stats", help="per-image statistics and box summaries")
    _add_common(p)
    p.add_argument("--groups", type=Path, required=True, help="groups.json from the group step")
    p.add_argument("--catalog", action="append", type=Path, required=True)
    p.add_argument("--image-root", type=Path, required=True)
    p.add_argument("--sample-n", type=int, default=None)
    p.add_argument("--resize", type=int, default=None)

    p = sub.add_parser("divergence", help="bootstrap divergence between datasets")
    _add_common(p)
    p.add_argument("--groups", type=Path, required=True)
    p.add_argument("--catalog", action="append", type=Path, required=True)
    p.add_argument("--image-root", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, default=None)
    p.add_argument("--source", default=None, help="source dataset abbreviation")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--resize", type=int, default=None)
    p.add_argument("--sweep-sizes", default=None, help="comma-separated sample sizes")

    p = sub.add_parser("tsne", help="2-D projection of embeddings per class")
    _add_common(p)
    p.add_argument("--groups", type=Path, required=True)
    p.add_argument("--catalog", action="append", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--perplexity", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None)

    p = sub.add_parser("metrics", help="score prediction CSVs (AUROC, balanced accuracy)")
    _add_common(p)
    p.add_argument("--predictions-dir", type=Path, required=True)

    p = sub.add_parser("correlate", help="correlate divergence with AUROC drops")
    _add_common(p)
    p.add_argument("--summary", type=Path, required=True, help="divergence_summary.csv")
    p.add_argument("--metrics", type=Path, required=True, help="metrics.csv")

    p = sub.add_parser("synth", help="generate synthetic shifted corpora")
    _add_common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--deltas", default=None, help="comma-separated brightness offsets")

    p = sub.add_parser("run", help="run the configured pipeline end to end")
    _add_common(p)

    return parser


def _overrides(args: argparse.Namespace, mapping: dict[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for arg_name, key in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            out[key] = value
    return out


def _config_from(args: argparse.Namespace, extra: dict[str, Any]) -> PipelineConfig:
    base = {"out_dir": args.out_dir, "seed": args.seed}
    overrides = {k: v for k, v in {**base, **extra}.items() if v is not None}
    return load_config(args.config, overrides)


def _emitter(config: PipelineConfig):
    from . import kernels
    from .pipeline import RunManifest, _Emitter
    from .config import config_snapshot

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        version=__version__, backend=kernels.BACKEND, config=config_snapshot(config)
    )
    return _Emitter(out_dir, manifest), manifest


def _load_groups(path: Path):
    from .grouping import read_manifest

    return read_manifest(path.read_text("utf-8"))


def _cmd_fetch(args: argparse.Namespace) -> int:
    from .fetch import FetchConfig, fetch_catalog

    config = _config_from(args, {})
    if args.cache_dir is not None:
        config.cache_dir = args.cache_dir
    params = {}
    for pair in args.param:
        if "=" not in pair:
            raise ConfigError(f"--param expects K=V, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key] = value
    fetch_config = FetchConfig(
        endpoint=args.endpoint,
        cache_dir=config.resolved_cache_dir(),
        params=params,
        origin_default=args.origin,
    )
    catalog = fetch_catalog(fetch_config, out_csv=args.out)
    print(f"fetched {len(catalog)} records -> {args.out}")
    return EXIT_OK


def _cmd_group(args: argparse.Namespace) -> int:
    from .pipeline import stage_group, stage_ingest

    config = _config_from(
        args,
        {
            "catalogs": tuple(args.catalog),
            "source_origin": args.source_origin,
            "localization_map": args.localization_map,
            "min_group_total": args.min_total,
        },
    )
    emitter, _ = _emitter(config)
    catalog = stage_ingest(config)
    kept = stage_group(catalog, config, emitter)
    for group in kept:
        counts = group.class_counts
        print(f"{group.abbrev}: {counts.get('melanoma', 0)} mel / {counts.get('nevus', 0)} nev")
    print(f"wrote {config.out_dir / 'groups.json'}")
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    from .pipeline import stage_ingest, stage_stats

    config = _config_from(
        args,
        {
            "catalogs": tuple(args.catalog),
            "image_root": args.image_root,
            "stats_sample_n": args.sample_n,
            "resize": args.resize,
        },
    )
    emitter, _ = _emitter(config)
    stage_stats(_load_groups(args.groups), stage_ingest(config), config, emitter)
    print(f"wrote {config.out_dir / 'stats.csv'}")
    return EXIT_OK


def _cmd_divergence(args: argparse.Namespace) -> int:
    from .config import _parse_int_list
    from .embeddings import read_embeddings
    from .pipeline import stage_divergence, stage_ingest

    extra: dict[str, Any] = {
        "catalogs": tuple(args.catalog),
        "image_root": args.image_root,
        "embeddings": args.embeddings,
        "source_dataset": args.source,
        "iterations": args.iterations,
        "sample_size": args.sample_size,
        "resize": args.resize,
    }
    if args.sweep_sizes is not None:
        extra["sweep_sizes"] = _parse_int_list(args.sweep_sizes)
        extra["run_sweep"] = True
    config = _config_from(args, extra)
    emitter, _ = _emitter(config)
    embeddings = None
    if config.embeddings is not None:
        embeddings = read_embeddings(Path(config.embeddings).read_text("utf-8"))
    stage_divergence(_load_groups(args.groups), stage_ingest(config), config, emitter, embeddings)
    print(f"wrote {config.out_dir / 'divergence_summary.csv'}")
    return EXIT_OK


def _cmd_tsne(args: argparse.Namespace) -> int:
    from .embeddings import read_embeddings
    from .pipeline import stage_ingest, stage_tsne

    config = _config_from(
        args,
        {
            "catalogs": tuple(args.catalog),
            "embeddings": args.embeddings,
            "tsne_perplexity": args.perplexity,
            "tsne_iterations": args.iterations,
        },
    )
    emitter, _ = _emitter(config)
    embeddings = read_embeddings(Path(config.embeddings).read_text("utf-8"))
    stage_tsne(_load_groups(args.groups), stage_ingest(config), config, emitter, embeddings)
    print(f"wrote projections under {config.out_dir}")
    return EXIT_OK


def _cmd_metrics(args: argparse.Namespace) -> int:
    from .pipeline import stage_metrics

    config = _config_from(args, {"predictions_dir": args.predictions_dir})
    emitter, _ = _emitter(config)
    rows = stage_metrics(config, emitter)
    for row in rows:
        print(f"{row['target']}/{row['class']}: auroc={row['auroc']:.4f}")
    return EXIT_OK


def _cmd_correlate(args: argparse.Namespace) -> int:
    from .divergence import DivergenceSummary, MetricKind, read_summary_csv
    from .metadata import Diagnosis
    from .pipeline import stage_correlate

    config = _config_from(args, {})
    emitter, _ = _emitter(config)

    summaries = []
    for row in read_summary_csv(args.summary.read_text("utf-8")):
        summaries.append(
            DivergenceSummary(
                metric=MetricKind(row["metric"]),
                source=row["source"],
                target=row["target"],
                diagnosis=Diagnosis(row["class"]),
                sample_size=int(row["sample_size"]),
                values=(),
                mean=float(row["mean"]),
                median=float(row["median"]),
                std=float(row["std"]),
            )
        )
    import csv as _csv

    metric_rows = []
    with open(args.metrics, newline="") as handle:
        for row in _csv.DictReader(handle):
            metric_rows.append(
                {
                    "target": row["target"],
                    "class": row["class"],
                    "n": int(row["n"]),
                    "auroc": float(row["auroc"]),
                    "balanced_accuracy": float(row["balanced_accuracy"]),
                    "auroc_drop": float(row["auroc_drop"]) if row["auroc_drop"] else None,
                    "bacc_drop": float(row["bacc_drop"]) if row["bacc_drop"] else None,
                }
            )
    matrices = stage_correlate(summaries, metric_rows, emitter)
    for cls, matrix in sorted(matrices.items()):
        print(f"{cls}: r(jsd, auroc_drop) = {matrix.value('jsd', 'auroc_drop'):+.3f}")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    from .config import _parse_float_list
    from .pipeline import stage_synth

    extra: dict[str, Any] = {"synth": True, "synth_n": args.n, "synth_size": args.size}
    if args.deltas is not None:
        extra["synth_deltas"] = _parse_float_list(args.deltas)
    config = _config_from(args, {k: v for k, v in extra.items() if v is not None})
    emitter, _ = _emitter(config)
    stage_synth(config, emitter)
    print(f"wrote synthetic corpus under {config.out_dir / 'synth'}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    from .pipeline import run_pipeline

    config = _config_from(args, {})
    manifest = run_pipeline(config)
    stages = ", ".join(sorted(manifest.stages))
    print(f"pipeline complete ({stages}) -> {Path(config.out_dir) / 'manifest.json'}")
    return EXIT_OK


_COMMANDS = {
    "fetch": _cmd_fetch,
    "group": _cmd_group,
    "stats": _cmd_stats,
    "divergence": _cmd_divergence,
    "tsne": _cmd_tsne,
    "metrics": _cmd_metrics,
    "correlate": _cmd_correlate,
    "synth": _cmd_synth,
    "run": _cmd_run,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NetworkError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DermshiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:
        # argparse --help/--version land here with code 0
        code = exc.code if isinstance(exc.code, int) else EXIT_CONFIG
        return code


if __name__ == "__main__":
    sys.exit(main())
