"""Command-line interface for the training harness.

Subcommands exchange files with the dermshift toolkit: group manifests in,
embedding/prediction CSVs out. Exit codes: 0 success, 1 configuration or
usage error, 2 data or training error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import ConfigError, DataError, HarnessError
from .io import atomic_write_text, dump_json

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors are config errors."""

    def error(self, message: str):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dermshift-harness", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dermshift-harness {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed a grouped dataset, one CSV row per image")
    p.add_argument("--manifest", type=Path, required=True, help="group manifest JSON")
    p.add_argument("--group", default=None, help="group abbreviation (needed for multi-group manifests)")
    p.add_argument("--image-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="embedding CSV to write")
    p.add_argument("--backbone", default="resnet18", help="resnet18 or resnet50")
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--no-pretrained", action="store_true", help="skip the pretrained-weights attempt")
    p.add_argument("--init-seed", type=int, default=0, help="trunk init seed when not pretrained")

    p = sub.add_parser("discriminate", help="train a source-vs-target domain discriminator")
    p.add_argument("--source-manifest", type=Path, required=True)
    p.add_argument("--source-group", default=None)
    p.add_argument("--target-manifest", type=Path, required=True)
    p.add_argument("--target-group", default=None)
    p.add_argument("--image-dir", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--backbone", default="resnet50", help="resnet50 or small")
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--sample-n", type=int, default=100)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("dann", help="source-only vs DANN comparison over seeds")
    p.add_argument("--source-manifest", type=Path, required=True)
    p.add_argument("--source-group", default=None)
    p.add_argument("--target-manifest", type=Path, action="append", required=True)
    p.add_argument("--labels", type=Path, required=True, help="image_id,score,label CSV with class labels")
    p.add_argument("--image-dir", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--input-size", type=int, default=16)
    p.add_argument("--grl-lambda", type=float, default=None, help="constant coefficient (default: ramp)")
    p.add_argument("--write-predictions", action="store_true", help="also write per-run prediction CSVs")

    return parser


def _members(manifest_path: Path, abbrev: str | None):
    from .manifest import load_group_manifest, select_group

    return select_group(load_group_manifest(manifest_path), abbrev)


def _cmd_extract(args: argparse.Namespace) -> int:
    from .extract import ExtractorSpec, extract_embeddings

    group = _members(args.manifest, args.group)
    spec = ExtractorSpec(
        backbone=args.backbone,
        input_size=args.input_size,
        pretrained=not args.no_pretrained,
        init_seed=args.init_seed,
    )
    result = extract_embeddings(args.image_dir, group.member_ids, spec)
    atomic_write_text(args.out, result.csv_text)
    atomic_write_text(args.out.with_suffix(".manifest.json"), dump_json(result.manifest))
    pretrained = "pretrained" if result.manifest["pretrained"] else "seeded-init"
    print(f"embedded {group.n} images ({spec.backbone}, {pretrained}) -> {args.out}")
    return EXIT_OK


def _cmd_discriminate(args: argparse.Namespace) -> int:
    from .discriminator import DiscriminatorConfig, train_domain_discriminator

    source = _members(args.source_manifest, args.source_group)
    target = _members(args.target_manifest, args.target_group)
    config = DiscriminatorConfig(
        backbone=args.backbone,
        input_size=args.input_size,
        sample_n=args.sample_n,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
    )
    result = train_domain_discriminator(source.member_ids, target.member_ids, args.image_dir, config)
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "predictions.csv", result.predictions_csv)
    atomic_write_text(out_dir / "report.json", dump_json(result.report))
    print(f"{source.abbrev} vs {target.abbrev}: auroc={result.auroc:.4f} -> {out_dir}")
    return EXIT_OK


def _cmd_dann(args: argparse.Namespace) -> int:
    from .dann import AdaptationRunSpec, DannConfig, run_dann_comparison

    try:
        seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"--seeds expects comma-separated integers, got {args.seeds!r}") from None
    spec = AdaptationRunSpec(
        source_manifest=args.source_manifest,
        target_manifests=tuple(args.target_manifest),
        labels_csv=args.labels,
        image_dir=args.image_dir,
        seeds=seeds,
        source_abbrev=args.source_group,
        config=DannConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            input_size=args.input_size,
            grl_lambda=args.grl_lambda,
        ),
    )
    result = run_dann_comparison(spec)
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "comparison.csv", result.comparison_csv)
    atomic_write_text(out_dir / "run_manifest.json", dump_json(result.run_manifest))
    if args.write_predictions:
        for (dataset, seed, method), csv_text in result.predictions.items():
            atomic_write_text(out_dir / f"preds_{dataset}_seed{seed}_{method}.csv", csv_text)
    for dataset, seed, method, value in result.rows:
        print(f"{dataset} seed={seed} {method}: auroc={value:.4f}")
    print(f"wrote {out_dir / 'comparison.csv'}")
    return EXIT_OK


_COMMANDS = {
    "extract": _cmd_extract,
    "discriminate": _cmd_discriminate,
    "dann": _cmd_dann,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:
        # argparse --help/--version land here with code 0
        code = exc.code if isinstance(exc.code, int) else EXIT_CONFIG
        return code


if __name__ == "__main__":
    sys.exit(main())
