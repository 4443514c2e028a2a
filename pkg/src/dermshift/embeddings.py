"""Embedding matrix I/O.

The embedding CSV contract is ``image_id,f0,...,f{d-1}`` with float
cells. Values are written with 9 significant digits, which round-trips
well below the comparison tolerances used anywhere downstream.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateId, EmptyInput, MalformedCsv, NonFiniteValue, RaggedRows


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-aligned ids and float64 feature matrix of shape (n, d)."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = self.values
        if arr.ndim != 2:
            raise RaggedRows(f"expected 2-D values, got ndim={arr.ndim}")
        if arr.shape[0] != len(self.ids):
            raise RaggedRows(f"{len(self.ids)} ids but {arr.shape[0]} rows")
        if len(set(self.ids)) != len(self.ids):
            seen: set[str] = set()
            dupes = [i for i in self.ids if i in seen or seen.add(i)]
            raise DuplicateId(sorted(set(dupes)))
        if not np.isfinite(arr).all():
            raise NonFiniteValue("embedding matrix contains non-finite values")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def index_of(self) -> dict[str, int]:
        return {image_id: i for i, image_id in enumerate(self.ids)}

    def select(self, ids: tuple[str, ...] | list[str]) -> np.ndarray:
        """Rows for the given ids, in the given order."""
        index = self.index_of()
        return self.values[[index[i] for i in ids]]


def write_embeddings(matrix: EmbeddingMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id"] + [f"f{j}" for j in range(matrix.dim)])
    for image_id, row in zip(matrix.ids, matrix.values):
        writer.writerow([image_id] + [format(v, ".9g") for v in row])
    return buf.getvalue()


def read_embeddings(text: str | bytes) -> EmbeddingMatrix:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise EmptyInput("empty embedding CSV")
    header = rows[0]
    if not header or header[0] != "image_id":
        raise MalformedCsv("embedding CSV must start with an image_id column")
    dim = len(header) - 1
    ids: list[str] = []
    values = np.empty((len(rows) - 1, dim), dtype=np.float64)
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != dim + 1:
            raise RaggedRows(f"row {k}: expected {dim + 1} cells, got {len(row)}")
        ids.append(row[0])
        try:
            values[k - 2] = [float(cell) for cell in row[1:]]
        except ValueError as exc:
            raise NonFiniteValue(f"row {k}: {exc}") from None
    return EmbeddingMatrix(ids=tuple(ids), values=values)
