"""Flat key=value run configuration.

The config file is plain ``key = value`` lines with ``#`` comments.
Every key is typed against a schema; unknown keys and untypable values
are configuration errors. Command-line flags override file values,
which override defaults. The fetch cache directory may also come from
the DERMSHIFT_CACHE_DIR environment variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

CACHE_ENV_VAR = "DERMSHIFT_CACHE_DIR"


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    return tuple(int(p) for p in parts)


def _parse_float_list(raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def _parse_path_list(raw: str) -> tuple[Path, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    return tuple(Path(p) for p in parts)


@dataclass
class PipelineConfig:
    """Everything a full run needs; one flat namespace."""

    # inputs
    catalogs: tuple[Path, ...] = ()
    image_root: Path | None = None
    embeddings: Path | None = None
    predictions_dir: Path | None = None
    localization_map: Path | None = None

    # grouping
    source_origin: str = "HAM"
    source_dataset: str = "H"
    min_group_total: int = 200

    # bootstrap
    iterations: int = 30
    sample_size: int = 250
    sweep_sizes: tuple[int, ...] = ()

    # image statistics
    stats_sample_n: int = 450
    resize: int = 224

    # t-SNE
    tsne_perplexity: float = 30.0
    tsne_iterations: int = 1000
    tsne_learning_rate: float = 200.0
    tsne_max_points: int = 5000

    # synthetic mode
    synth: bool = False
    synth_n: int = 60
    synth_size: int = 64
    synth_deltas: tuple[float, ...] = (0.0, 0.08, 0.16, 0.3)

    # stage toggles
    run_stats: bool = True
    run_divergence: bool = True
    run_sweep: bool = False
    run_tsne: bool = True
    run_metrics: bool = True
    run_correlate: bool = True

    # general
    out_dir: Path = Path("out")
    seed: int = 0
    cache_dir: Path | None = None

    def resolved_cache_dir(self) -> Path:
        if self.cache_dir is not None:
            return self.cache_dir
        env = os.environ.get(CACHE_ENV_VAR)
        if env:
            return Path(env)
        return self.out_dir / "cache"


_PARSERS: dict[str, Any] = {
    "catalogs": _parse_path_list,
    "image_root": Path,
    "embeddings": Path,
    "predictions_dir": Path,
    "localization_map": Path,
    "source_origin": str,
    "source_dataset": str,
    "min_group_total": int,
    "iterations": int,
    "sample_size": int,
    "sweep_sizes": _parse_int_list,
    "stats_sample_n": int,
    "resize": int,
    "tsne_perplexity": float,
    "tsne_iterations": int,
    "tsne_learning_rate": float,
    "tsne_max_points": int,
    "synth": _parse_bool,
    "synth_n": int,
    "synth_size": int,
    "synth_deltas": _parse_float_list,
    "run_stats": _parse_bool,
    "run_divergence": _parse_bool,
    "run_sweep": _parse_bool,
    "run_tsne": _parse_bool,
    "run_metrics": _parse_bool,
    "run_correlate": _parse_bool,
    "out_dir": Path,
    "seed": int,
    "cache_dir": Path,
}

assert set(_PARSERS) == {f.name for f in fields(PipelineConfig)}


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse key=value lines into typed values; strict on unknown keys."""
    values: dict[str, Any] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw_line!r}")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](raw_value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return values


def load_config(path: Path | str | None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Defaults <- file <- overrides. Overrides are already typed."""
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text("utf-8")))
    for key, value in (overrides or {}).items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    return PipelineConfig(**values)


def config_snapshot(config: PipelineConfig) -> dict[str, Any]:
    """JSON-friendly view of the effective configuration."""
    out: dict[str, Any] = {}
    for f in fields(PipelineConfig):
        value = getattr(config, f.name)
        if isinstance(value, Path):
            out[f.name] = str(value)
        elif isinstance(value, tuple):
            out[f.name] = [str(v) if isinstance(v, Path) else v for v in value]
        else:
            out[f.name] = value
    return out
