"""File emission: CSV/JSON writers plus atomic writes (temp file + rename).

The embedding and prediction CSV layouts follow the dermshift file contracts
exactly; contract tests parse the output with the toolkit's readers.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "atomic_write_text",
    "write_embedding_csv",
    "write_predictions_csv",
    "write_comparison_csv",
    "dump_json",
]

COMPARISON_CSV_COLUMNS = ("dataset", "seed", "method", "auroc")


def atomic_write_text(path: Path | str, text: str) -> Path:
    """Write via a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise
    return path


def write_embedding_csv(ids: Sequence[str], values: np.ndarray) -> str:
    """image_id,f0..f{d-1} rows, one per image, floats at 9 significant digits."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != len(ids):
        raise DataError(f"expected ({len(ids)}, d) embeddings, got {values.shape}")
    if not np.isfinite(values).all():
        raise DataError("embeddings contain non-finite values")
    if len(set(ids)) != len(ids):
        raise DataError("duplicate image ids in embedding rows")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id"] + [f"f{j}" for j in range(values.shape[1])])
    for image_id, row in zip(ids, values):
        writer.writerow([image_id] + [format(v, ".9g") for v in row])
    return buf.getvalue()


def write_predictions_csv(ids: Sequence[str], scores, labels) -> str:
    """image_id,score,label rows; scores finite floats, labels 0/1."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not (len(ids) == scores.shape[0] == labels.shape[0]):
        raise DataError("ids, scores and labels must align")
    if not np.isfinite(scores).all():
        raise DataError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "score", "label"])
    for image_id, score, label in zip(ids, scores, labels):
        writer.writerow([image_id, format(float(score), ".9g"), int(label)])
    return buf.getvalue()


def write_comparison_csv(rows: Iterable[tuple[str, int, str, float]]) -> str:
    """dataset,seed,method,auroc rows — one per training run, aggregation downstream."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARISON_CSV_COLUMNS)
    for dataset, seed, method, value in rows:
        writer.writerow([dataset, int(seed), method, format(float(value), ".9g")])
    return buf.getvalue()


def dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
